"""Canonical record files, key=value manifests, splits, and dataset assembly.

The canonical record file is comma-separated text with a schema-version
header. Fixed column order:

    env_id, anchor_id, tag_id, rep_id, anchor_x_cm, anchor_y_cm,
    tag_x_cm, tag_y_cm, first_path_idx, toa_dwm, range_err_cm,
    true_toa, is_nlos, s0 .. s{n-1}

``range_err_cm`` is empty for unlabeled records; ``true_toa``/``is_nlos``
are empty for real (non-simulated) data. Floats are written with repr so
round-trips are lossless.
"""

from __future__ import annotations

import csv
import glob
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .core import CirRecord, PhysConstants, Position2D, preprocess, toa_label
from .errors import AllZeroCir, MissingLabel, PartialIngest, SchemaMismatch
from .models import FingerprintSet
from .simulate import SynthRecord

RECORDS_SCHEMA = "uwbpos-records v1"
N_FIXED_COLS = 13


# ---------------------------------------------------------------------------
# Canonical record files

def _fmt(x) -> str:
    return repr(float(x))


def write_records(path, records) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {RECORDS_SCHEMA}\n")
        writer = csv.writer(fh)
        for r in records:
            true_toa = getattr(r, "true_toa", None)
            is_nlos = getattr(r, "is_nlos", None)
            row = [
                r.env_id,
                r.anchor_id,
                r.tag_id,
                r.rep_id,
                _fmt(r.anchor_pos.x),
                _fmt(r.anchor_pos.y),
                _fmt(r.tag_pos.x),
                _fmt(r.tag_pos.y),
                r.first_path_idx,
                _fmt(r.toa_dwm),
                "" if r.range_err_cm is None else _fmt(r.range_err_cm),
                "" if true_toa is None else _fmt(true_toa),
                "" if is_nlos is None else int(is_nlos),
            ]
            row.extend(_fmt(s) for s in r.samples)
            writer.writerow(row)


def read_records(path) -> list:
    records = []
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != f"# {RECORDS_SCHEMA}":
            raise SchemaMismatch(f"{path}: expected '# {RECORDS_SCHEMA}', got {header!r}")
        for row in csv.reader(fh):
            if not row:
                continue
            common = dict(
                env_id=row[0],
                anchor_id=int(row[1]),
                tag_id=int(row[2]),
                rep_id=int(row[3]),
                anchor_pos=Position2D(float(row[4]), float(row[5])),
                tag_pos=Position2D(float(row[6]), float(row[7])),
                first_path_idx=int(row[8]),
                toa_dwm=float(row[9]),
                range_err_cm=float(row[10]) if row[10] else None,
                samples=np.array(row[N_FIXED_COLS:], dtype=float),
            )
            if row[11]:
                records.append(
                    SynthRecord(**common, true_toa=float(row[11]), is_nlos=bool(int(row[12])))
                )
            else:
                records.append(CirRecord(**common))
    return records


# ---------------------------------------------------------------------------
# Plain key=value manifests and configs

def read_kv(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines skipped."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaMismatch(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_kv(path, mapping, header: str | None = None) -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for key, value in mapping.items():
            fh.write(f"{key} = {value}\n")


# ---------------------------------------------------------------------------
# Splits

@dataclass(frozen=True)
class SplitPlan:
    """Train/val/test quotas with one shuffle seed per repetition."""

    fractions: tuple = (0.70, 0.15, 0.15)
    n_repetitions: int = 10
    seeds: tuple = ()

    def __post_init__(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9 or len(self.fractions) != 3:
            raise ValueError("fractions must be three values summing to 1")
        if self.n_repetitions < 1:
            raise ValueError("n_repetitions must be >= 1")
        if not self.seeds:
            object.__setattr__(self, "seeds", tuple(range(self.n_repetitions)))
        if len(self.seeds) < self.n_repetitions:
            raise ValueError("need one seed per repetition")

    @classmethod
    def from_master(cls, master_seed: int, n_repetitions: int = 10,
                    fractions=(0.70, 0.15, 0.15)) -> "SplitPlan":
        seeds = tuple(master_seed + i for i in range(n_repetitions))
        return cls(fractions=tuple(fractions), n_repetitions=n_repetitions, seeds=seeds)


def split(n_items: int, plan: SplitPlan, rep: int):
    """Disjoint, exhaustive (train, val, test) index arrays for one repetition."""
    if n_items < 1:
        raise ValueError("n_items must be >= 1")
    if not 0 <= rep < plan.n_repetitions:
        raise ValueError(f"rep must be in [0, {plan.n_repetitions})")
    rng = np.random.default_rng(plan.seeds[rep])
    perm = rng.permutation(n_items)
    n_train = int(n_items * plan.fractions[0])
    n_val = int(n_items * plan.fractions[1])
    return (
        perm[:n_train],
        perm[n_train : n_train + n_val],
        perm[n_train + n_val :],
    )


# ---------------------------------------------------------------------------
# Dataset assembly

@dataclass
class ToaDataset:
    """Preprocessed windows with window-relative ToA labels."""

    records: list
    windows: list
    labels: np.ndarray
    n_excluded: int


def make_toa_dataset(records, k: PhysConstants = PhysConstants()) -> ToaDataset:
    """Window + label pairs from labeled records; unlabeled ones are counted out."""
    kept, windows, labels = [], [], []
    n_excluded = 0
    for r in records:
        try:
            w = preprocess(r)
            labels.append(w.to_relative(toa_label(r, k)))
        except (MissingLabel, AllZeroCir):
            n_excluded += 1
            continue
        kept.append(r)
        windows.append(w)
    return ToaDataset(kept, windows, np.array(labels, dtype=float), n_excluded)


@dataclass
class FpDataset:
    """Fingerprint sets grouped per (env, tag, repetition)."""

    sets: list
    n_incomplete: int


def _zero_window():
    from .core import WINDOW_LEN, CirWindow

    return CirWindow(values=np.zeros(WINDOW_LEN), window_start=0, norm_factor=1.0)


def make_fp_dataset(records) -> FpDataset:
    """One set per (env, tag, rep) with anchors in canonical (sorted id) order.

    Groups missing an anchor get an all-zero channel and are flagged
    incomplete; groups missing the tag position entirely are impossible by
    construction (every record carries its tag_pos).
    """
    anchor_ids = tuple(sorted({r.anchor_id for r in records}))
    groups: dict = {}
    for r in records:
        groups.setdefault((r.env_id, r.tag_id, r.rep_id), {})[r.anchor_id] = r
    sets = []
    n_incomplete = 0
    for key in sorted(groups):
        by_anchor = groups[key]
        windows = []
        incomplete = False
        for aid in anchor_ids:
            rec = by_anchor.get(aid)
            if rec is None:
                windows.append(_zero_window())
                incomplete = True
                continue
            try:
                windows.append(preprocess(rec))
            except AllZeroCir:
                windows.append(_zero_window())
                incomplete = True
        n_incomplete += incomplete
        any_rec = next(iter(by_anchor.values()))
        sets.append(
            FingerprintSet(
                windows=tuple(windows),
                anchor_ids=anchor_ids,
                position=any_rec.tag_pos,
                incomplete=incomplete,
            )
        )
    return FpDataset(sets, n_incomplete)


def split_sets_by_location(sets, plan: SplitPlan, rep: int):
    """Location-disjoint alternative to record-level set splitting.

    All repetitions of one tag location land in the same partition. Off by
    default in the pipelines; provided because it changes generalization
    claims for fingerprinting.
    """
    locations = sorted({(s.position.x, s.position.y) for s in sets})
    tr_loc, val_loc, te_loc = split(len(locations), plan, rep)
    buckets = {loc: 0 for loc in (locations[i] for i in tr_loc)}
    buckets.update({loc: 1 for loc in (locations[i] for i in val_loc)})
    buckets.update({loc: 2 for loc in (locations[i] for i in te_loc)})
    out = ([], [], [])
    for i, s in enumerate(sets):
        out[buckets[(s.position.x, s.position.y)]].append(i)
    return tuple(np.array(part, dtype=int) for part in out)


# ---------------------------------------------------------------------------
# Public-dataset adapter

@dataclass
class IngestResult:
    records: list
    skipped: list
    env_counts: dict


def _require(header, config, key):
    col = config.get(key, "")
    if not col:
        return None
    if col not in header:
        raise SchemaMismatch(f"configured column {key}={col!r} not in file header")
    return col


def ingest_public_dataset(path, adapter: dict) -> IngestResult:
    """Map source CSVs under ``path`` to canonical records.

    The adapter names source columns (see configs/adapter_example.cfg).
    Complex CIRs are reduced to magnitude when both ``cir_prefix`` and
    ``cir_imag_prefix`` are configured. Rows that fail to parse are skipped
    and reported; an ingest that produces no records raises PartialIngest.
    """
    pattern = adapter.get("files", "*.csv")
    scale = float(adapter.get("pos_scale_to_cm", 1.0))
    n_raw = int(adapter.get("n_raw", 1016))
    cir_prefix = adapter.get("cir_prefix", "cir_")
    imag_prefix = adapter.get("cir_imag_prefix", "")

    records = []
    skipped = []
    env_counts: dict = {}
    rep_counter: dict = {}

    files = sorted(glob.glob(os.path.join(path, pattern)))
    for fname in files:
        with open(fname, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            cols = {
                key: _require(header, adapter, key)
                for key in (
                    "env_col",
                    "anchor_id_col",
                    "tag_id_col",
                    "rep_id_col",
                    "anchor_x_col",
                    "anchor_y_col",
                    "tag_x_col",
                    "tag_y_col",
                    "fp_idx_col",
                    "toa_dwm_col",
                    "range_err_col",
                )
            }
            for key in ("anchor_id_col", "tag_id_col", "anchor_x_col", "anchor_y_col",
                        "tag_x_col", "tag_y_col", "fp_idx_col", "toa_dwm_col"):
                if cols[key] is None:
                    raise SchemaMismatch(f"adapter must configure {key}")
            cir_cols = [f"{cir_prefix}{i}" for i in range(n_raw)]
            missing = [c for c in cir_cols if c not in header]
            if missing:
                raise SchemaMismatch(f"CIR column {missing[0]!r} not in file header")
            imag_cols = []
            if imag_prefix:
                imag_cols = [f"{imag_prefix}{i}" for i in range(n_raw)]
                missing = [c for c in imag_cols if c not in header]
                if missing:
                    raise SchemaMismatch(f"CIR column {missing[0]!r} not in file header")

            stem = os.path.splitext(os.path.basename(fname))[0]
            for lineno, row in enumerate(reader, 2):
                try:
                    env = row[cols["env_col"]] if cols["env_col"] else stem
                    anchor_id = int(float(row[cols["anchor_id_col"]]))
                    tag_id = int(float(row[cols["tag_id_col"]]))
                    mag = np.array([row[c] for c in cir_cols], dtype=float)
                    if imag_cols:
                        imag = np.array([row[c] for c in imag_cols], dtype=float)
                        mag = np.hypot(mag, imag)
                    else:
                        mag = np.abs(mag)
                    if cols["rep_id_col"]:
                        rep_id = int(float(row[cols["rep_id_col"]]))
                    else:
                        rep_key = (env, anchor_id, tag_id)
                        rep_id = rep_counter.get(rep_key, 0)
                        rep_counter[rep_key] = rep_id + 1
                    err_col = cols["range_err_col"]
                    rec = CirRecord(
                        env_id=env,
                        anchor_id=anchor_id,
                        tag_id=tag_id,
                        rep_id=rep_id,
                        samples=mag,
                        first_path_idx=int(float(row[cols["fp_idx_col"]])),
                        toa_dwm=float(row[cols["toa_dwm_col"]]),
                        anchor_pos=Position2D(
                            float(row[cols["anchor_x_col"]]) * scale,
                            float(row[cols["anchor_y_col"]]) * scale,
                        ),
                        tag_pos=Position2D(
                            float(row[cols["tag_x_col"]]) * scale,
                            float(row[cols["tag_y_col"]]) * scale,
                        ),
                        range_err_cm=(
                            float(row[err_col]) * scale
                            if err_col and row.get(err_col, "") != ""
                            else None
                        ),
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    skipped.append((fname, lineno, str(exc)))
                    continue
                records.append(rec)
                env_counts[env] = env_counts.get(env, 0) + 1

    if not records:
        raise PartialIngest(
            f"no records ingested from {path!r} ({len(skipped)} rows skipped, "
            f"{len(files)} files matched)"
        )
    return IngestResult(records, skipped, env_counts)
