"""Device resource budgets and rate constants."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .graph import LayerKind


class ProfileError(ValueError):
    pass


def _default_dsp_cost() -> dict:
    return {
        LayerKind.LayerNorm: 512,
        LayerKind.Softmax: 336,
        LayerKind.GeLU: 0,
        LayerKind.Transpose: 0,
        LayerKind.Reformat: 0,
        LayerKind.VectorAdd: 0,
    }


@dataclass(frozen=True)
class HardwareProfile:
    name: str = "custom"
    aie_total: int = 400
    plio_budget: int = 220
    bram_total: int = 967
    uram_total: int = 462
    dsp_total: int = 1968
    aie_local_mem_bytes: int = 32768
    mac_per_aie_per_cycle: int = 128
    freq_aie_hz: float = 1.0e9
    freq_pl_hz: float = 230.0e6
    offchip_bw_bytes_per_s: float = 25.6e9
    bank_bytes: int = 4608
    eff: float = 0.8
    nonlinear_dsp_cost: dict = field(default_factory=_default_dsp_cost)
    # not in the minimal field list; all have working defaults
    uram_bank_bytes: int = 36864
    bank_word_bytes: int = 8
    plio_width_bytes: int = 16  # 128-bit stream port, one beat per PL cycle

    def __post_init__(self):
        cost = {LayerKind(k): int(v) for k, v in dict(self.nonlinear_dsp_cost).items()}
        object.__setattr__(self, "nonlinear_dsp_cost", cost)
        self.validate()

    def __hash__(self):
        return hash(self.to_json())

    def validate(self) -> "HardwareProfile":
        positive = ("aie_total", "plio_budget", "bram_total", "dsp_total", "aie_local_mem_bytes",
                    "mac_per_aie_per_cycle", "freq_aie_hz", "freq_pl_hz",
                    "offchip_bw_bytes_per_s", "bank_bytes", "uram_bank_bytes",
                    "bank_word_bytes", "plio_width_bytes")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ProfileError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.uram_total < 0:
            raise ProfileError("uram_total must be >= 0")
        if not 0 < self.eff <= 1:
            raise ProfileError(f"eff must be in (0, 1], got {self.eff}")
        for kind, v in self.nonlinear_dsp_cost.items():
            if kind.is_hmm:
                raise ProfileError(f"nonlinear_dsp_cost has compute kind {kind.value}")
            if v < 0:
                raise ProfileError(f"negative DSP cost for {kind.value}")
        return self

    @property
    def ram_banks_total(self) -> int:
        """Device RAM expressed in ``bank_bytes``-sized banks."""
        return self.bram_total + self.uram_total * (self.uram_bank_bytes // self.bank_bytes)

    @property
    def onchip_bytes(self) -> int:
        return self.bram_total * self.bank_bytes + self.uram_total * self.uram_bank_bytes

    def dsp_cost(self, kinds) -> int:
        return sum(self.nonlinear_dsp_cost.get(LayerKind(k), 0) for k in set(kinds))

    def with_(self, **kw) -> "HardwareProfile":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nonlinear_dsp_cost"] = {k.value: v for k, v in
                                   sorted(self.nonlinear_dsp_cost.items(), key=lambda kv: kv[0].value)}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "HardwareProfile":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ProfileError(f"unknown profile fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ProfileError(str(exc)) from exc


VCK190 = HardwareProfile(name="vck190")

# Stratix 10 NX: 3960 AI tensor blocks x 30 INT8 MAC/cycle at 600 MHz (~143 TOPS),
# 6250 x 2560 B M20K = 16 MB on chip, 512 GB/s HBM. No UltraRAM.
STRATIX10NX = HardwareProfile(
    name="stratix10nx",
    aie_total=3960,
    plio_budget=3960,
    bram_total=6250,
    uram_total=0,
    dsp_total=3960,
    aie_local_mem_bytes=32768,
    mac_per_aie_per_cycle=30,
    freq_aie_hz=600.0e6,
    freq_pl_hz=600.0e6,
    offchip_bw_bytes_per_s=512.0e9,
    bank_bytes=2560,
    uram_bank_bytes=2560,
)

BUILTIN_PROFILES = {"vck190": VCK190, "stratix10nx": STRATIX10NX}


def load_profile(path_or_name) -> HardwareProfile:
    key = str(path_or_name)
    if key.lower() in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[key.lower()]
    p = Path(key)
    if not p.exists():
        raise ProfileError(f"no built-in profile or file named {key!r}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ProfileError(f"{p}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ProfileError(f"{p}: profile must be a JSON object")
    return HardwareProfile.from_dict(raw)


def peak_tops(p: HardwareProfile) -> float:
    """Peak INT8 ops/s (a MAC counts as two ops)."""
    return p.aie_total * p.mac_per_aie_per_cycle * 2 * p.freq_aie_hz
