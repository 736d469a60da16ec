"""Mapping transformer graphs onto multi-accelerator vector-core/fabric devices."""

from .graph import MODELS, Graph, Layer, LayerKind, ModelSpec, build_transformer, total_macs
from .hardware import VCK190, HardwareProfile, load_profile, peak_tops
from .perf import AccConfig, CommEdge, HmmType, force_partition, mm_cycles
from .schedule import Assignment, Schedule, layer_acc_schedule

__version__ = "0.1.0"
