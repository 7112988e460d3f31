"""Batch experiment driver and gateway launcher.

Every command is reproducible byte-for-byte from its flags and seed: all
randomness is seeded, all clocks are simulated, and each report is written
twice, once as canonical bytes and once as a plain-text table derived from
the same in-memory values.

Exit codes: 0 success, 1 bad configuration, 2 internal invariant violation.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from .audit import Auditor
from .canonical import canonical_serialize
from .crypto import KeyVault, sha256
from .hitl import active_learning_run, synth_dataset
from .ledger import (
    AnchorTx,
    Ledger,
    NegativeInputError,
    NetworkConfig,
    OnChainAnchor,
    TxKind,
    onchain_cost_estimate,
    preset_config,
)
from .store import MemoryStore

BAD_CONFIG = 1
INVARIANT_VIOLATION = 2


def _write_report(out_dir: Path, name: str, value, table: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.cbor").write_bytes(canonical_serialize(value))
    (out_dir / f"{name}.txt").write_text(table)
    click.echo(table)


@click.group()
def main() -> None:
    """Anchored, explainable loan underwriting: experiments and service."""


# ---------------------------------------------------------------------------
# ledger-bench
# ---------------------------------------------------------------------------


@main.command("ledger-bench")
@click.option("--orgs", default=4, show_default=True, help="Organization node count (single run).")
@click.option("--txs", default=800, show_default=True, help="Transactions in the workload.")
@click.option("--preset", default="fabric-like", show_default=True,
              type=click.Choice(["fabric-like", "ethereum-like"]))
@click.option("--seed", default=0, show_default=True)
@click.option("--sweep", is_flag=True, help="Sweep org counts 2,4,6,8 instead of a single run.")
@click.option("--out", "out_dir", default="bench-out", show_default=True)
def cmd_ledger_bench(orgs: int, txs: int, preset: str, seed: int, sweep: bool, out_dir: str) -> None:
    """Commit a fixed anchor workload and report latency/throughput."""
    if txs <= 0 or orgs < 1:
        click.echo("txs must be positive and orgs >= 1", err=True)
        sys.exit(BAD_CONFIG)
    org_counts = [2, 4, 6, 8] if sweep else [orgs]
    rows = []
    for n_orgs in org_counts:
        report = _run_bench(n_orgs, txs, preset, seed)
        rows.append(
            {
                "orgs": n_orgs,
                "tx_count": report.tx_count,
                "mean_latency_ms": report.mean_latency_ms,
                "median_latency_ms": report.median_latency_ms,
                "p95_latency_ms": report.p95_latency_ms,
                "throughput_tps": report.throughput_tps,
            }
        )
    header = f"{'orgs':>4}  {'txs':>6}  {'mean ms':>9}  {'median ms':>9}  {'p95 ms':>8}  {'tps':>9}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r['orgs']:>4}  {r['tx_count']:>6}  {r['mean_latency_ms']:>9.1f}  "
            f"{r['median_latency_ms']:>9.1f}  {r['p95_latency_ms']:>8.1f}  {r['throughput_tps']:>9.2f}"
        )
    _write_report(Path(out_dir), f"ledger-bench-{preset}", rows, "\n".join(lines) + "\n")
    if sweep:
        latencies = [r["mean_latency_ms"] for r in rows]
        throughputs = [r["throughput_tps"] for r in rows]
        if latencies != sorted(latencies) or throughputs != sorted(throughputs, reverse=True):
            click.echo("sweep trend violated (latency must rise, throughput fall)", err=True)
            sys.exit(INVARIANT_VIOLATION)


def _run_bench(org_count: int, txs: int, preset: str, seed: int):
    config = preset_config(preset, org_count)
    ledger = Ledger(config, seed=seed)
    rng = np.random.default_rng(seed)
    # workload: txs spread evenly across orgs, submitted in one burst window
    for i in range(txs):
        org = f"org-{i % org_count + 1}"
        anchor = OnChainAnchor(f"cust-{i}", int(i), sha256(f"{seed}:{i}".encode()))
        submit = int(rng.integers(0, config.block_interval_ms))
        ledger.submit_tx(AnchorTx.create(TxKind.EXPLANATION, anchor.to_dict(), org, submit))
    ledger.run_ordering()
    return ledger.perf_report()


# ---------------------------------------------------------------------------
# tamper-sweep
# ---------------------------------------------------------------------------


@main.command("tamper-sweep")
@click.option("--count", default=200, show_default=True, help="Anchored records in the corpus.")
@click.option("--from", "frac_from", default=0.02, show_default=True)
@click.option("--to", "frac_to", default=0.20, show_default=True)
@click.option("--step", default=0.02, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", default="bench-out", show_default=True)
def cmd_tamper_sweep(count: int, frac_from: float, frac_to: float, step: float,
                     seed: int, out_dir: str) -> None:
    """Corrupt a growing share of off-chain records and audit the corpus."""
    if count < 50:
        click.echo("count must be at least 50", err=True)
        sys.exit(BAD_CONFIG)
    if step <= 0 or frac_from < 0 or frac_to > 1 or frac_from > frac_to:
        click.echo("fractions must satisfy 0 <= from <= to <= 1 with positive step", err=True)
        sys.exit(BAD_CONFIG)

    fractions = []
    f = frac_from
    while f <= frac_to + 1e-9:
        fractions.append(round(f, 10))
        f += step

    rows = []
    for fraction in fractions:
        # a fresh pipeline per cell so corruption never carries over
        vault = KeyVault()
        vault.register_org("org-1")
        store = MemoryStore(vault)
        ledger = Ledger(NetworkConfig(org_count=4, block_interval_ms=100, max_txs_per_block=1000),
                        seed=seed)
        for i in range(count):
            payload = canonical_serialize({"case": i, "seed": seed})
            _, anchor = store.store_explanation_pair(f"cust-{i:05d}", 1000 + i, payload, "org-1")
            ledger.submit_tx(AnchorTx.create(TxKind.EXPLANATION, anchor.to_dict(), "org-1", 1000 + i))
        ledger.run_ordering()
        auditor = Auditor(store, ledger, vault)
        report = auditor.batch_audit_experiment(count, fraction, seed)
        expected = int(fraction * count)
        if report.tampered_found != expected:
            click.echo(
                f"detection mismatch at fraction {fraction}: "
                f"{report.tampered_found} != {expected}", err=True,
            )
            sys.exit(INVARIANT_VIOLATION)
        rows.append(
            {
                "fraction": fraction,
                "total_files": report.total_files,
                "detected": report.tampered_found,
                "audit_ops": report.audit_ops,
            }
        )

    header = f"{'fraction':>8}  {'files':>6}  {'detected':>8}  {'audit ops':>9}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r['fraction']:>8.2f}  {r['total_files']:>6}  {r['detected']:>8}  {r['audit_ops']:>9}")
    _write_report(Path(out_dir), "tamper-sweep", rows, "\n".join(lines) + "\n")

    ops = [r["audit_ops"] for r in rows]
    if ops != sorted(ops):
        click.echo("audit workload must not decrease as tampering grows", err=True)
        sys.exit(INVARIANT_VIOLATION)


# ---------------------------------------------------------------------------
# active-learning
# ---------------------------------------------------------------------------


@main.command("active-learning")
@click.option("--iterations", default=6, show_default=True)
@click.option("--batch", default=150, show_default=True)
@click.option("--threshold", default=0.80, show_default=True)
@click.option("--initial", default=150, show_default=True, help="Initial labeled set size.")
@click.option("--epochs", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", default="bench-out", show_default=True)
def cmd_active_learning(iterations: int, batch: int, threshold: float, initial: int,
                        epochs: int, seed: int, out_dir: str) -> None:
    """Run the expert-annotation loop on synthetic data; write the AUC curve."""
    if iterations < 0 or batch <= 0 or not 0 <= threshold <= 1 or initial <= 0:
        click.echo("bad loop parameters", err=True)
        sys.exit(BAD_CONFIG)
    data = synth_dataset(seed=seed)
    if initial + iterations * batch > len(data):
        click.echo("synthetic corpus too small for this schedule", err=True)
        sys.exit(BAD_CONFIG)
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(data))
    initial_set = data.subset(idx[:initial])
    pool = data.subset(idx[initial:])
    records = active_learning_run(
        pool, initial_set, iterations=iterations, batch=batch,
        threshold=threshold, seed=seed, epochs=epochs,
    )

    rows = [r.to_dict() for r in records]
    header = f"{'iter':>4}  {'added':>5}  {'labeled':>7}  {'mean AUC':>8}"
    lines = [header, "-" * len(header)]
    for r in records:
        lines.append(f"{r.iteration:>4}  {r.annotated_added:>5}  {r.labeled_size:>7}  {r.mean_auc:>8.4f}")
    _write_report(Path(out_dir), "active-learning", rows, "\n".join(lines) + "\n")
    plot = "".join(f"{r.iteration}\t{r.mean_auc:.6f}\n" for r in records)
    (Path(out_dir) / "active-learning-curve.tsv").write_text(plot)


# ---------------------------------------------------------------------------
# cost
# ---------------------------------------------------------------------------


@main.command("cost")
@click.option("--bytes", "byte_count", required=True, type=int)
@click.option("--usd-per-kb", default=50.93, show_default=True)
def cmd_cost(byte_count: int, usd_per_kb: float) -> None:
    """Estimate the cost of storing a payload directly on chain."""
    try:
        cost = onchain_cost_estimate(byte_count, usd_per_kb)
    except NegativeInputError as exc:
        click.echo(str(exc), err=True)
        sys.exit(BAD_CONFIG)
    click.echo(f"{byte_count} bytes at ${usd_per_kb}/KB -> ${cost:g}")


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


@main.command("serve")
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store", "store_dir", default=None, help="Directory for the file-backed store.")
@click.option("--seed", default=0, show_default=True)
@click.option("--bootstrap/--no-bootstrap", default=True, show_default=True,
              help="Register demo actors and train an initial model.")
def cmd_serve(port: int, host: str, store_dir: str | None, seed: int, bootstrap: bool) -> None:
    """Start the HTTP gateway."""
    import uvicorn

    from .gateway import DecisionService, GatewayConfig, bootstrap_demo, create_app

    service = DecisionService(GatewayConfig(store_dir=store_dir, seed=seed))
    if bootstrap:
        creds = bootstrap_demo(service, seed=seed)
        click.echo("demo actors (id -> credential):")
        for actor_id, secret in creds.items():
            click.echo(f"  {actor_id} -> {secret}")
    uvicorn.run(create_app(service), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
