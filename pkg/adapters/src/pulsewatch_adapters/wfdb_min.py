"""Minimal self-contained WFDB subset: headers, format 16/212 signals, and
MIT-format annotations with AUX rhythm strings.

Covers exactly what single-lead long-term ECG records (Icentia11k-style) need;
multi-segment records, non-integer rates, and exotic formats are out of scope.
"""
from __future__ import annotations

import os
import re
import struct
from dataclasses import dataclass, field

import numpy as np

# MIT annotation type codes used here
CODE_NORMAL_BEAT = 1
CODE_RHYTHM = 28
_CODE_SKIP = 59
_CODE_NUM = 60
_CODE_SUB = 61
_CODE_CHN = 62
_CODE_AUX = 63


@dataclass
class SignalSpec:
    file_name: str
    fmt: int
    gain: float = 200.0
    baseline: int = 0
    units: str = "mV"
    description: str = "ECG"


@dataclass
class Header:
    record_name: str
    n_sig: int
    fs: float
    n_samples: int
    signals: list[SignalSpec] = field(default_factory=list)


@dataclass
class Annotation:
    sample: int
    code: int
    aux: str | None = None


class WfdbFormatError(ValueError):
    pass


_GAIN_RE = re.compile(r"^([-+0-9.eE]+)(?:\(([-+0-9]+)\))?(?:/(\S+))?$")


def read_header(path) -> Header:
    lines = []
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        for raw in fh:
            line = raw.strip()
            if line and not line.startswith("#"):
                lines.append(line)
    if not lines:
        raise WfdbFormatError(f"{path}: empty header")
    head = lines[0].split()
    if len(head) < 4:
        raise WfdbFormatError(f"{path}: record line needs name, n_sig, fs, n_samples")
    record_name = head[0].split("/")[0]
    n_sig = int(head[1])
    fs = float(head[2].split("/")[0])
    n_samples = int(head[3])
    signals = []
    for line in lines[1 : 1 + n_sig]:
        tokens = line.split()
        if len(tokens) < 2:
            raise WfdbFormatError(f"{path}: bad signal line {line!r}")
        fmt = int(tokens[1].split("+")[0].split("x")[0])
        gain, baseline, units = 200.0, 0, "mV"
        if len(tokens) >= 3:
            m = _GAIN_RE.match(tokens[2])
            if m:
                gain = float(m.group(1)) or 200.0
                baseline = int(m.group(2)) if m.group(2) else 0
                units = m.group(3) or "mV"
        adc_zero = int(tokens[4]) if len(tokens) >= 5 else 0
        if len(tokens) < 3 or not _GAIN_RE.match(tokens[2]) or _GAIN_RE.match(tokens[2]).group(2) is None:
            baseline = adc_zero
        description = tokens[8] if len(tokens) >= 9 else f"sig{len(signals)}"
        signals.append(SignalSpec(tokens[0], fmt, gain, baseline, units, description))
    return Header(record_name, n_sig, fs, n_samples, signals)


def read_signal(header: Header, record_dir) -> np.ndarray:
    """Physical units, shape (n_samples, n_sig). All signals share one file."""
    spec = header.signals[0]
    if any(s.file_name != spec.file_name for s in header.signals):
        raise WfdbFormatError("multi-file records are not supported")
    path = os.path.join(record_dir, spec.file_name)
    raw = open(path, "rb").read()
    if spec.fmt == 16:
        adc = np.frombuffer(raw, dtype="<i2")
    elif spec.fmt == 212:
        adc = _decode_212(raw)
    else:
        raise WfdbFormatError(f"unsupported signal format {spec.fmt}")
    usable = (len(adc) // header.n_sig) * header.n_sig
    adc = adc[:usable].reshape(-1, header.n_sig)[: header.n_samples]
    out = np.empty(adc.shape, dtype=float)
    for ch, sig in enumerate(header.signals):
        out[:, ch] = (adc[:, ch].astype(float) - sig.baseline) / sig.gain
    return out


def _decode_212(raw: bytes) -> np.ndarray:
    usable = (len(raw) // 3) * 3
    b = np.frombuffer(raw[:usable], dtype=np.uint8).reshape(-1, 3).astype(np.int32)
    s0 = b[:, 0] | ((b[:, 1] & 0x0F) << 8)
    s1 = b[:, 2] | ((b[:, 1] & 0xF0) << 4)
    out = np.empty(b.shape[0] * 2, dtype=np.int32)
    out[0::2] = s0
    out[1::2] = s1
    out[out > 2047] -= 4096
    return out


def write_record(
    record_dir,
    record_name: str,
    signal_physical: np.ndarray,
    fs: float,
    gain: float = 200.0,
    units: str = "mV",
    description: str = "ECG",
) -> tuple[str, str]:
    """Write a single-channel format-16 record; returns (hea_path, dat_path)."""
    os.makedirs(record_dir, exist_ok=True)
    x = np.asarray(signal_physical, dtype=float).reshape(-1)
    adc = np.clip(np.round(x * gain), -32768, 32767).astype("<i2")
    dat_name = f"{record_name}.dat"
    dat_path = os.path.join(record_dir, dat_name)
    with open(dat_path, "wb") as fh:
        fh.write(adc.tobytes())
    hea_path = os.path.join(record_dir, f"{record_name}.hea")
    with open(hea_path, "w", encoding="ascii") as fh:
        fh.write(f"{record_name} 1 {fs:g} {x.size}\n")
        fh.write(f"{dat_name} 16 {gain:g}(0)/{units} 16 0 0 0 0 {description}\n")
    return hea_path, dat_path


# ---------------------------------------------------------------------------
# Annotations


def read_annotations(path) -> list[Annotation]:
    raw = open(path, "rb").read()
    anns: list[Annotation] = []
    t = 0
    i = 0
    n = len(raw)
    while i + 1 < n:
        word = raw[i] | (raw[i + 1] << 8)
        i += 2
        code = word >> 10
        delta = word & 0x3FF
        if code == 0 and delta == 0:
            break
        if code == _CODE_SKIP:
            if i + 3 >= n:
                raise WfdbFormatError(f"{path}: truncated SKIP atom")
            high = raw[i] | (raw[i + 1] << 8)
            low = raw[i + 2] | (raw[i + 3] << 8)
            i += 4
            skip = (high << 16) | low
            if skip >= 1 << 31:
                skip -= 1 << 32
            t += skip
        elif code == _CODE_AUX:
            aux = raw[i : i + delta].rstrip(b"\x00").decode("ascii", errors="replace")
            i += delta + (delta & 1)
            if anns:
                anns[-1].aux = aux
        elif code in (_CODE_NUM, _CODE_SUB, _CODE_CHN):
            continue
        else:
            t += delta
            anns.append(Annotation(sample=t, code=code))
    return anns


def write_annotations(path, annotations: list[Annotation]) -> None:
    """Annotations must be sample-sorted; aux strings ride on their atom."""
    buf = bytearray()
    prev = 0
    for ann in annotations:
        delta = ann.sample - prev
        if delta < 0:
            raise WfdbFormatError("annotations must be sorted by sample")
        prev = ann.sample
        if delta > 1023:
            buf += struct.pack("<H", _CODE_SKIP << 10)
            buf += struct.pack("<H", (delta >> 16) & 0xFFFF)
            buf += struct.pack("<H", delta & 0xFFFF)
            delta = 0
        buf += struct.pack("<H", (ann.code << 10) | delta)
        if ann.aux:
            aux_bytes = ann.aux.encode("ascii")
            buf += struct.pack("<H", (_CODE_AUX << 10) | len(aux_bytes))
            buf += aux_bytes
            if len(aux_bytes) & 1:
                buf += b"\x00"
    buf += struct.pack("<H", 0)
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def rhythm_intervals(
    annotations: list[Annotation], fs: float, end_sample: int
) -> list[tuple[float, float, str]]:
    """(start_s, end_s, label) spans from RHYTHM aux changes like '(AFIB'."""
    changes = [
        (a.sample, a.aux.lstrip("(")) for a in annotations
        if a.code == CODE_RHYTHM and a.aux
    ]
    spans = []
    for k, (sample, label) in enumerate(changes):
        stop = changes[k + 1][0] if k + 1 < len(changes) else end_sample
        if stop > sample:
            spans.append((sample / fs, stop / fs, label))
    return spans
