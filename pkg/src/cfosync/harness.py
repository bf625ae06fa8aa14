"""Monte-Carlo experiment driver: scenario configs, seeded trials, aggregation.

Config files are flat ``key = value`` text with ``#`` comments.  Recognized
keys (defaults in parentheses):

    topology            random | edgelist (random)
    nodes               node count for random topologies (14)
    side                placement square side (100.0)
    comm_range          connection radius (38.0)
    edge_list           path to an edge-list file (required for edgelist)
    antennas            per-node antenna count, int or comma list (2)
    reference           reference node id (1)
    snr_db              comma list of training SNRs in dB (30)
    train_len           training sequence length N (16)
    training_kind       random | shift (random)
    trials              Monte-Carlo trials per SNR point (500)
    seed                master seed (1)
    mode                oracle | full (oracle)
    max_iter            message-passing iteration cap (200)
    eta                 mean-change stop threshold, 0 disables (1e-8)
    cfo_range           offsets drawn from 2*pi*[-f, f] (0.05)
    resample_topology   redraw node positions every trial (false)
    consensus_iters     rounds for the consensus comparison (800)
    out_dir             output directory (out)

Every random draw comes from a stream seeded by hashing (master seed,
purpose tag, trial index, ...), so adding instrumentation or reordering
work never perturbs existing draws, and a full run is reproducible to the
byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baseline, bp, oracle
from .measurement import (
    MODE_FULL_SIGNAL,
    MODE_ORACLE,
    EdgeMeasurement,
    LinkChannel,
    OscillatorState,
    TrainingMatrix,
    build_structure_matrices,
    measure_edge,
    mimo_crb,
    miso_crb,
    random_training,
    scalar_cfo_crb,
    snr_db_to_noise_var,
)
from .topology import NetworkGraph, load_edge_list, random_geometric

# Purpose tags for derived seed streams.
_P_TOPOLOGY = 1
_P_OFFSETS = 2
_P_CHANNEL = 3
_P_MEASUREMENT = 4
_P_TRAINING = 5
_P_CONSENSUS = 6

_MODE_ALIASES = {
    "oracle": MODE_ORACLE,
    "oracle-measurement": MODE_ORACLE,
    "full": MODE_FULL_SIGNAL,
    "full-signal": MODE_FULL_SIGNAL,
}


class ConfigError(ValueError):
    """Invalid scenario configuration (maps to CLI exit code 1)."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one experiment."""

    topology: str = "random"
    nodes: int = 14
    side: float = 100.0
    comm_range: float = 38.0
    edge_list: str | None = None
    antennas: tuple | int = 2
    reference: int = 1
    snr_db: tuple = (30.0,)
    train_len: int = 16
    training_kind: str = "random"
    trials: int = 500
    seed: int = 1
    mode: str = MODE_ORACLE
    max_iter: int = 200
    eta: float = 1e-8
    cfo_range: float = 0.05
    resample_topology: bool = False
    consensus_iters: int = 800
    out_dir: str = "out"
    source_text: str | None = field(default=None, compare=False)

    def __post_init__(self):
        mode = _MODE_ALIASES.get(str(self.mode).strip().lower())
        if mode is None:
            raise ConfigError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if np.isscalar(self.antennas):
            ants = int(self.antennas)
            object.__setattr__(self, "antennas", ants)
            max_ant = ants
        else:
            ants = tuple(int(a) for a in self.antennas)
            object.__setattr__(self, "antennas", ants)
            max_ant = max(ants)
        snrs = tuple(float(s) for s in np.atleast_1d(np.asarray(self.snr_db)))
        object.__setattr__(self, "snr_db", snrs)
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not snrs:
            raise ConfigError("snr_db must be non-empty")
        if self.train_len <= max_ant:
            raise ConfigError("train_len must exceed the largest antenna count")
        if self.topology not in ("random", "edgelist"):
            raise ConfigError(f"unknown topology {self.topology!r}")
        if self.topology == "edgelist" and not self.edge_list:
            raise ConfigError("edgelist topology requires edge_list")
        if self.cfo_range <= 0 or self.cfo_range > 0.5:
            raise ConfigError("cfo_range must be in (0, 0.5]")


_CONFIG_KEYS = {
    "topology": str,
    "nodes": int,
    "side": float,
    "comm_range": float,
    "edge_list": str,
    "antennas": "int_list",
    "reference": int,
    "snr_db": "float_list",
    "train_len": int,
    "training_kind": str,
    "trials": int,
    "seed": int,
    "mode": str,
    "max_iter": int,
    "eta": float,
    "cfo_range": float,
    "resample_topology": "bool",
    "consensus_iters": int,
    "out_dir": str,
}


def parse_config(text: str) -> ScenarioConfig:
    """Parse flat key-value config text into a :class:`ScenarioConfig`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind = _CONFIG_KEYS[key]
        try:
            if kind == "bool":
                if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(val)
                values[key] = val.lower() in ("true", "1", "yes")
            elif kind == "int_list":
                parts = [int(p) for p in val.split(",") if p.strip()]
                values[key] = parts[0] if len(parts) == 1 else tuple(parts)
            elif kind == "float_list":
                values[key] = tuple(float(p) for p in val.split(",") if p.strip())
            else:
                values[key] = kind(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from exc
    try:
        return ScenarioConfig(**values, source_text=text)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def serialize_config(config: ScenarioConfig) -> str:
    lines = []
    for key in _CONFIG_KEYS:
        val = getattr(config, key)
        if val is None:
            continue
        if isinstance(val, tuple):
            val = ",".join(repr(v) if isinstance(v, float) else str(v) for v in val)
        elif isinstance(val, bool):
            val = "true" if val else "false"
        elif isinstance(val, float):
            val = repr(val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


_ASSUMPTION_LINES = (
    "# assumptions:",
    "#   snr_db = -10*log10(noise_var); unit power per transmit antenna",
    "#   channels Rayleigh flat fading, unit average gain, redrawn per trial",
    "#   topology resampling (when enabled) redraws node positions only",
    "#   one seeded training sequence per distinct antenna count, shared by nodes",
)


def _rng(master_seed: int, purpose: int, *key) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((int(master_seed), int(purpose), *map(int, key)))
    )


def _snr_key(snr_db: float) -> int:
    return int(round(float(snr_db) * 1000.0))


def topology_for_trial(config: ScenarioConfig, trial_index: int) -> NetworkGraph:
    if config.topology == "edgelist":
        return load_edge_list(config.edge_list, config.antennas)
    tkey = trial_index if config.resample_topology else 0
    return random_geometric(
        config.nodes,
        config.side,
        config.comm_range,
        config.antennas,
        rng_seed=_rng(config.seed, _P_TOPOLOGY, tkey),
    )


def draw_offsets(config: ScenarioConfig, graph: NetworkGraph, trial_index: int) -> dict:
    """Per-node offset vectors, uniform in 2*pi*[-f, f]; reference pinned to 0."""
    rng = _rng(config.seed, _P_OFFSETS, trial_index)
    span = 2.0 * np.pi * config.cfo_range
    truth = {}
    for i in graph.nodes:
        w = rng.uniform(-span, span, size=graph.antenna_count(i))
        if i == graph.reference:
            w = np.zeros_like(w)
        truth[i] = w
    return truth


def _training_bank(config: ScenarioConfig, graph: NetworkGraph) -> dict:
    bank = {}
    for n_tx in sorted(set(graph.antennas)):
        bank[n_tx] = random_training(
            config.train_len,
            n_tx,
            rng_seed=_rng(config.seed, _P_TRAINING, n_tx),
            kind=config.training_kind,
        )
    return bank


@dataclass(frozen=True)
class TrialRecord:
    """Everything one trial produced, for aggregation and audits."""

    snr_db: float
    trial_index: int
    graph: NetworkGraph
    truth: dict
    measurements: tuple
    trajectory: bp.BPTrajectory
    central_means: dict
    crb_blocks: dict


def run_trial(config: ScenarioConfig, trial_index: int, snr_db=None) -> TrialRecord:
    """One seeded trial: draw offsets and channels, measure every edge, run
    the message-passing engine, and solve the centralized references."""
    if snr_db is None:
        snr_db = config.snr_db[0]
    graph = topology_for_trial(config, trial_index)
    truth = draw_offsets(config, graph, trial_index)
    training = _training_bank(config, graph)
    noise_var = snr_db_to_noise_var(snr_db)
    skey = _snr_key(snr_db)

    measurements = []
    for i, j in graph.edges:
        gains_rng = _rng(config.seed, _P_CHANNEL, trial_index, i, j)
        n_tx, n_rx = graph.antenna_count(i), graph.antenna_count(j)
        gains = (
            gains_rng.standard_normal((n_tx, n_rx))
            + 1j * gains_rng.standard_normal((n_tx, n_rx))
        ) / np.sqrt(2.0)
        channel = LinkChannel(i, j, gains, noise_var)
        measurements.append(
            measure_edge(
                (i, j),
                OscillatorState(i, truth[i]),
                OscillatorState(j, truth[j]),
                channel,
                training[n_tx],
                mode=config.mode,
                rng_seed=_rng(config.seed, _P_MEASUREMENT, trial_index, skey, i, j),
            )
        )

    trajectory = bp.run(
        graph, measurements, max_iter=config.max_iter, eta=config.eta
    )
    model = oracle.stack(graph, measurements)
    omega_hat, cov = oracle.centralized_mmse(model)
    return TrialRecord(
        snr_db,
        trial_index,
        graph,
        truth,
        tuple(measurements),
        trajectory,
        model.split(omega_hat),
        model.split(cov),
    )


@dataclass(frozen=True)
class ResultRow:
    snr_db: float
    iteration: int
    node: object  # node id, or "avg" for the network average
    mse: float
    crb_reference: float
    trials: int

    def __post_init__(self):
        if self.mse < 0:
            raise ValueError("mse must be non-negative")
        if self.crb_reference <= 0:
            raise ValueError("crb_reference must be positive")


@dataclass(frozen=True)
class ResultTable:
    rows: tuple

    def final_iteration(self, snr_db: float) -> int:
        return max(r.iteration for r in self.rows if r.snr_db == snr_db)

    def lookup(self, snr_db: float, iteration: int, node) -> ResultRow:
        for r in self.rows:
            if r.snr_db == snr_db and r.iteration == iteration and r.node == node:
                return r
        raise KeyError((snr_db, iteration, node))


def aggregate(records) -> ResultTable:
    """Reduce trial records into per-node and network-average MSE series.

    Per (SNR, node, iteration): mean over trials of the squared error norm
    of the belief mean (summed over antenna components), next to the matching
    trace of the centralized bound averaged over the same trials.  "avg"
    rows average both columns over the non-reference nodes.
    """
    records = list(records)
    if not records:
        raise ValueError("need at least one record")
    rows = []
    snrs = sorted({r.snr_db for r in records})
    n_iters = max(r.trajectory.iterations_run for r in records)
    for snr in snrs:
        group = [r for r in records if r.snr_db == snr]
        nodes = [
            i for i in group[0].graph.nodes if i != group[0].graph.reference
        ]
        crb_ref = {
            i: float(np.mean([np.trace(r.crb_blocks[i]) for r in group]))
            for i in nodes
        }
        for it in range(1, n_iters + 1):
            per_node = {}
            for i in nodes:
                errs = [
                    float(np.sum((r.trajectory.means_at(it)[i] - r.truth[i]) ** 2))
                    for r in group
                ]
                per_node[i] = float(np.mean(errs))
                rows.append(
                    ResultRow(snr, it, i, per_node[i], crb_ref[i], len(group))
                )
            rows.append(
                ResultRow(
                    snr,
                    it,
                    "avg",
                    float(np.mean(list(per_node.values()))),
                    float(np.mean(list(crb_ref.values()))),
                    len(group),
                )
            )
    return ResultTable(tuple(rows))


def _fmt(x) -> str:
    return repr(float(x))


def write_mse_vs_iter(table: ResultTable, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("snr_db,node,iter,mse,crb\n")
        for r in table.rows:
            if r.node == "avg":
                continue
            fh.write(
                f"{_fmt(r.snr_db)},{r.node},{r.iteration},"
                f"{_fmt(r.mse)},{_fmt(r.crb_reference)}\n"
            )


def write_mse_vs_snr(table: ResultTable, path, train_len: int):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("snr_db,train_len,mse_avg,crb_avg\n")
        for snr in sorted({r.snr_db for r in table.rows}):
            row = table.lookup(snr, table.final_iteration(snr), "avg")
            fh.write(
                f"{_fmt(snr)},{train_len},{_fmt(row.mse)},{_fmt(row.crb_reference)}\n"
            )


def write_crb_vs_snr(table: ResultTable, path, train_len: int):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("snr_db,train_len,crb_avg\n")
        for snr in sorted({r.snr_db for r in table.rows}):
            row = table.lookup(snr, table.final_iteration(snr), "avg")
            fh.write(f"{_fmt(snr)},{train_len},{_fmt(row.crb_reference)}\n")


def _echo_config(config: ScenarioConfig, out_dir: Path):
    echo = config.source_text if config.source_text is not None else serialize_config(config)
    (out_dir / "config_echo.cfg").write_text(echo, encoding="utf-8")
    resolved = serialize_config(config) + "\n".join(_ASSUMPTION_LINES) + "\n"
    (out_dir / "config_resolved.cfg").write_text(resolved, encoding="utf-8")


def run_simulate(config: ScenarioConfig) -> dict:
    """Full Monte-Carlo sweep; writes the CSV outputs and the config echo.

    Returns a dict naming the written files.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for snr in config.snr_db:
        for t in range(config.trials):
            records.append(run_trial(config, t, snr))
    table = aggregate(records)
    paths = {
        "mse_vs_iter": out_dir / "mse_vs_iter.csv",
        "mse_vs_snr": out_dir / "mse_vs_snr.csv",
        "crb_vs_snr": out_dir / "crb_vs_snr.csv",
    }
    write_mse_vs_iter(table, paths["mse_vs_iter"])
    write_mse_vs_snr(table, paths["mse_vs_snr"], config.train_len)
    write_crb_vs_snr(table, paths["crb_vs_snr"], config.train_len)
    _echo_config(config, out_dir)
    return {k: str(v) for k, v in paths.items()}


def run_compare(config: ScenarioConfig) -> dict:
    """Consensus-vs-message-passing comparison; writes consensus_vs_bp.csv.

    Requires single-antenna nodes.  Both sides start from the same per-trial
    truth; the consensus noise variance is tied to the single-antenna link
    bound at the configured SNR so that the comparison is information-fair.
    """
    if any(a != 1 for a in topology_for_trial(config, 0).antennas):
        raise ConfigError("compare-consensus requires single-antenna nodes")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["snr_db,iter,mse_bp,mse_consensus"]
    for snr in config.snr_db:
        noise_var = scalar_cfo_crb(snr_db_to_noise_var(snr), config.train_len)
        bp_means = []
        truths = []
        cons_values = []
        for t in range(config.trials):
            rec = run_trial(config, t, snr)
            nodes = [i for i in rec.graph.nodes if i != rec.graph.reference]
            steps = [
                [float(rec.trajectory.means_at(l)[i][0]) for i in nodes]
                for l in range(0, config.max_iter + 1)
            ]
            bp_means.append(steps)
            truths.append([float(rec.truth[i][0]) for i in nodes])
            init = np.array([float(rec.truth[i][0]) for i in rec.graph.nodes])
            cons_values.append(
                baseline.run_consensus(
                    rec.graph,
                    init,
                    config.consensus_iters,
                    noise_var,
                    rng_seed=_rng(config.seed, _P_CONSENSUS, t, _snr_key(snr)),
                )
            )
        bp_series = baseline.mse_bp(np.asarray(bp_means), np.asarray(truths))
        cons_series = baseline.mse_consensus(np.asarray(cons_values))
        total = max(bp_series.shape[0], cons_series.shape[0])
        for it in range(total):
            b = bp_series[min(it, bp_series.shape[0] - 1)]
            c = cons_series[min(it, cons_series.shape[0] - 1)]
            lines.append(f"{_fmt(snr)},{it},{_fmt(b)},{_fmt(c)}")
    path = out_dir / "consensus_vs_bp.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _echo_config(config, out_dir)
    return {"consensus_vs_bp": str(path)}


def crb_for_topology(
    graph: NetworkGraph, snr_db: float, train_len: int, training_kind="random", seed=0
) -> dict:
    """Centralized bound diagonal per node for a fixed topology.

    Uses unit channel gains and zero offsets so the result is a property of
    (topology, SNR, training length) alone.
    """
    noise_var = snr_db_to_noise_var(snr_db)
    bank = {
        n_tx: random_training(
            train_len, n_tx, rng_seed=_rng(seed, _P_TRAINING, n_tx), kind=training_kind
        )
        for n_tx in sorted(set(graph.antennas))
    }
    measurements = []
    for i, j in graph.edges:
        n_tx, n_rx = graph.antenna_count(i), graph.antenna_count(j)
        blocks = [
            miso_crb(np.zeros(n_tx), np.ones(n_tx), bank[n_tx], noise_var)
            for _ in range(n_rx)
        ]
        a_ij, a_ji = build_structure_matrices(n_tx, n_rx)
        measurements.append(
            EdgeMeasurement(i, j, np.zeros(n_tx * n_rx), mimo_crb(blocks), a_ij, a_ji)
        )
    model = oracle.stack(graph, measurements)
    return model.split(np.diag(oracle.centralized_crb(model)))


def run_crb(config: ScenarioConfig, out_path=None) -> str:
    """Write one CSV of the per-node bound diagonal: ``node,component,crb``."""
    graph = topology_for_trial(config, 0)
    diag = crb_for_topology(
        graph, config.snr_db[0], config.train_len, config.training_kind, config.seed
    )
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = Path(out_path) if out_path else out_dir / "crb_per_node.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("node,component,crb\n")
        for node in sorted(diag):
            for c, v in enumerate(diag[node], start=1):
                fh.write(f"{node},{c},{_fmt(v)}\n")
    return str(path)


def run_trace(config: ScenarioConfig, trial_index: int = 0) -> str:
    """Dump one trial's full belief trajectory as CSV."""
    record = run_trial(config, trial_index, config.snr_db[0])
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "trace.csv"
    bp.write_trajectory_csv(record.trajectory, path)
    return str(path)
