"""Reading, writing and daylight-saving normalization of auction data.

Bid files are long CSVs with a mandatory header::

    date,hour,side,price,volume
    2015-04-12,13,S,-65.0,12.5

``hour`` is the auction slot within the local day: 0..23 on regular days,
0..22 on the spring-forward day (clock hour ``dst_hour`` does not exist) and
0..24 on the fall-back day (clock hour ``dst_hour`` is auctioned twice, slots
``dst_hour`` and ``dst_hour + 1``). Exogenous files use ``date,hour,name,value``
with the same slot convention.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import zipfile
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .errors import IrregularDayError, ParseError, ValidationError
from .grid import DEFAULT_GRID, PriceGrid, Side
from .panel import HOURS, BidArrays, PanelDataset

log = logging.getLogger(__name__)

AUCTION_HEADER = ["date", "hour", "side", "price", "volume"]
EXOGENOUS_HEADER = ["date", "hour", "name", "value"]
EXOGENOUS_NAMES = ("price", "volume", "generation", "wind", "solar")
PANEL_FORMAT = "xmodel-panel"
PANEL_VERSION = 1


@dataclass(frozen=True)
class AuctionRecord:
    date: date
    hour: int
    side: Side
    price: float
    volume: float


@dataclass
class RawPanel:
    """Bids grouped by (date, slot, side) before daylight-saving normalization."""

    grid: PriceGrid = DEFAULT_GRID
    cells: dict = field(default_factory=lambda: defaultdict(dict))
    exogenous: dict = field(default_factory=dict)

    def add(self, rec: AuctionRecord, tick: int):
        cell = self.cells[(rec.date, rec.hour, rec.side)]
        cell[tick] = cell.get(tick, 0.0) + rec.volume

    def dates(self):
        ds = {k[0] for k in self.cells} | {k[0] for k in self.exogenous}
        return sorted(ds)


def _parse_date(text, line):
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"bad date {text!r}", line) from None


def _parse_slot(text, line):
    try:
        hour = int(text)
    except ValueError:
        raise ParseError(f"bad hour {text!r}", line) from None
    if not 0 <= hour <= 24:
        raise ValidationError(f"hour {hour} outside 0..24", line)
    return hour


def _parse_float(text, what, line):
    try:
        x = float(text)
    except ValueError:
        raise ParseError(f"bad {what} {text!r}", line) from None
    if not np.isfinite(x):
        raise ValidationError(f"{what} must be finite", line)
    return x


def _check_header(header, expected, path):
    if header is None:
        raise ParseError(f"{path}: empty file", 1)
    if [h.strip().lower() for h in header] != expected:
        raise ParseError(f"expected header {','.join(expected)}", 1)


def iter_auction_records(path, grid: PriceGrid = DEFAULT_GRID):
    """Yield ``(AuctionRecord, tick)`` for every row, validating as it goes."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        _check_header(next(reader, None), AUCTION_HEADER, path)
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise ParseError(f"expected 5 fields, got {len(row)}", line)
            day = _parse_date(row[0], line)
            hour = _parse_slot(row[1], line)
            try:
                side = Side.parse(row[2])
            except ValueError as exc:
                raise ParseError(str(exc), line) from None
            price = _parse_float(row[3], "price", line)
            volume = _parse_float(row[4], "volume", line)
            if volume <= 0:
                raise ValidationError(f"volume must be positive, got {volume}", line)
            try:
                tick = grid.to_tick(price)
            except ValidationError:
                raise ValidationError(f"price {price} is not on the bid grid", line) from None
            yield AuctionRecord(day, hour, side, price, volume), tick


def load_auctions(path, grid: PriceGrid = DEFAULT_GRID, raw: RawPanel | None = None) -> RawPanel:
    raw = raw if raw is not None else RawPanel(grid)
    for rec, tick in iter_auction_records(path, grid):
        raw.add(rec, tick)
    return raw


def load_exogenous(path, raw: RawPanel | None = None) -> RawPanel:
    raw = raw if raw is not None else RawPanel()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        _check_header(next(reader, None), EXOGENOUS_HEADER, path)
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line)
            day = _parse_date(row[0], line)
            hour = _parse_slot(row[1], line)
            name = row[2].strip()
            if not name:
                raise ParseError("empty series name", line)
            raw.exogenous[(day, hour, name)] = _parse_float(row[3], "value", line)
    return raw


def _slot_labels(n_slots: int, dst_hour: int):
    """Clock-hour label of every slot for a day with ``n_slots`` auctions."""
    if n_slots == 24:
        return list(range(24))
    if n_slots == 23:
        return [h for h in range(24) if h != dst_hour]
    if n_slots == 25:
        return list(range(dst_hour + 1)) + [dst_hour] + list(range(dst_hour + 1, 24))
    raise IrregularDayError(f"day with {n_slots} auctions cannot be normalized")


def _merge(dicts):
    """Per-price arithmetic mean of several bid dicts (absent price = 0)."""
    out = defaultdict(float)
    for d in dicts:
        for k, v in d.items():
            out[k] += v / len(dicts)
    return {k: v for k, v in out.items() if v > 0}


def normalize_dst(raw: RawPanel, dst_hour: int = 2) -> PanelDataset:
    """Map every day onto exactly 24 hourly auctions.

    The missing spring hour becomes the per-price mean of its two neighbours;
    the doubled autumn hour becomes the per-price mean of its two observations.
    Exogenous values are treated the same way.
    """
    days = raw.dates()
    if not days:
        raise ValidationError("no data")
    slots_by_day = defaultdict(set)
    for (d, s, _side) in raw.cells:
        slots_by_day[d].add(s)
    for (d, s, _name) in raw.exogenous:
        slots_by_day[d].add(s)
    names = sorted({k[2] for k in raw.exogenous})

    rows = {Side.SUPPLY: [], Side.DEMAND: []}
    exo = {n: np.full((len(days), HOURS), np.nan) for n in names}
    dst_days = set()
    for di, d in enumerate(days):
        slots = sorted(slots_by_day[d])
        n_slots = len(slots)
        if slots != list(range(n_slots)):
            raise IrregularDayError(f"{d}: auction slots {slots} are not contiguous from 0")
        labels = _slot_labels(n_slots, dst_hour)
        if n_slots != 24:
            dst_days.add(d)
            log.info("%s: normalizing %d-auction day", d, n_slots)
        by_label = defaultdict(list)
        for s, lab in enumerate(labels):
            by_label[lab].append(s)
        for side in (Side.SUPPLY, Side.DEMAND):
            cells = {s: raw.cells.get((d, s, side), {}) for s in range(n_slots)}
            for h in range(HOURS):
                if h in by_label:
                    merged = _merge([cells[s] for s in by_label[h]])
                else:
                    merged = _merge([cells[by_label[h - 1][-1]], cells[by_label[h + 1][0]]])
                if not merged:
                    raise ValidationError(f"{d} hour {h}: no {side.name.lower()} bids")
                ticks = np.array(sorted(merged), dtype=np.int64)
                rows[side].append((ticks, np.array([merged[t] for t in ticks])))
        for name in names:
            vals = {s: raw.exogenous.get((d, s, name), np.nan) for s in range(n_slots)}
            for h in range(HOURS):
                src = by_label[h] if h in by_label else [by_label[h - 1][-1], by_label[h + 1][0]]
                exo[name][di, h] = float(np.mean([vals[s] for s in src]))
    return PanelDataset(
        tuple(days),
        BidArrays.from_rows(rows[Side.SUPPLY]),
        BidArrays.from_rows(rows[Side.DEMAND]),
        exo,
        raw.grid,
        frozenset(dst_days),
    )


def save_auctions(panel: PanelDataset, path):
    """Write the bids of a normalized panel as long CSV (exact float repr)."""
    to_p = panel.grid.to_prices
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AUCTION_HEADER)
        for di, d in enumerate(panel.days):
            iso = d.isoformat()
            for h in range(HOURS):
                for side in (Side.SUPPLY, Side.DEMAND):
                    ticks, vols = panel.bids(side).row(di * HOURS + h)
                    for p, v in zip(to_p(ticks).tolist(), vols.tolist()):
                        w.writerow([iso, h, side.value, repr(p), repr(v)])


def save_exogenous(panel: PanelDataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EXOGENOUS_HEADER)
        for di, d in enumerate(panel.days):
            for h in range(HOURS):
                for name in sorted(panel.exogenous):
                    x = float(panel.exogenous[name][di, h])
                    if np.isfinite(x):
                        w.writerow([d.isoformat(), h, name, repr(x)])


def read_panel_csv(auctions, exogenous=None, grid: PriceGrid = DEFAULT_GRID, dst_hour: int = 2) -> PanelDataset:
    raw = load_auctions(auctions, grid)
    if exogenous is not None:
        load_exogenous(exogenous, raw)
    return normalize_dst(raw, dst_hour)


# -- binary panel container -------------------------------------------------

def write_npz(path, arrays: dict, meta: dict):
    """Deterministic .npz: fixed member order and timestamps, JSON metadata."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("meta.json", date_time=(1980, 1, 1, 0, 0, 0))
        info.compress_type = zipfile.ZIP_DEFLATED
        zf.writestr(info, json.dumps(meta, sort_keys=True, indent=1))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())


def read_npz(path):
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        arrays = {}
        for name in zf.namelist():
            if name.endswith(".npy"):
                arrays[name[:-4]] = np.load(io.BytesIO(zf.read(name)), allow_pickle=False)
    return arrays, meta


def save_panel(panel: PanelDataset, path):
    names = sorted(panel.exogenous)
    arrays = {}
    for side, bids in (("supply", panel.supply), ("demand", panel.demand)):
        arrays[f"{side}_ticks"] = bids.ticks
        arrays[f"{side}_volumes"] = bids.volumes
        arrays[f"{side}_offsets"] = bids.offsets
    for n in names:
        arrays[f"exo_{n}"] = panel.exogenous[n]
    meta = {
        "format": PANEL_FORMAT,
        "version": PANEL_VERSION,
        "days": [d.isoformat() for d in panel.days],
        "dst_days": sorted(d.isoformat() for d in panel.dst_days),
        "grid": [panel.grid.p_min, panel.grid.p_max, panel.grid.tick],
        "exogenous": names,
    }
    write_npz(path, arrays, meta)


def load_panel(path) -> PanelDataset:
    arrays, meta = read_npz(path)
    if meta.get("format") != PANEL_FORMAT:
        raise ValidationError(f"{path} is not a panel file")
    if meta.get("version") != PANEL_VERSION:
        raise ValidationError(f"unsupported panel version {meta.get('version')}")
    sides = [
        BidArrays(arrays[f"{s}_ticks"], arrays[f"{s}_volumes"], arrays[f"{s}_offsets"])
        for s in ("supply", "demand")
    ]
    return PanelDataset(
        tuple(date.fromisoformat(d) for d in meta["days"]),
        sides[0],
        sides[1],
        {n: arrays[f"exo_{n}"] for n in meta["exogenous"]},
        PriceGrid(*meta["grid"]),
        frozenset(date.fromisoformat(d) for d in meta["dst_days"]),
    )
