"""Link-level simulator for overloaded non-orthogonal multiple access.

K user symbols are spread over M < K orthogonal resources by an incoherent
tight frame, pass through per-resource Rayleigh fading, and are jointly
detected by sphere decoding. The package covers frame design, the transmit
chain, exact-ML and budgeted detectors, and Monte Carlo BER sweeps.
"""

__version__ = "0.1.0"

from .frames import (
    Frame,
    FrameReport,
    coherence,
    frame_report,
    generate_incoherent_tight_frame,
    generate_random_unit_norm_frame,
    make_tight,
    read_frame_file,
    welch_bound,
    write_frame_file,
)
from .phy import (
    Constellation,
    demap,
    effective_matrix,
    get_constellation,
    modulate,
    sample_channel,
    transmit,
)
from .detectors import (
    DetectionResult,
    DetectorConfig,
    gsd_detect,
    gsd_stochastic,
    ml_exhaustive,
    mmse_detect,
)
from .sim import (
    BerCurve,
    BerPoint,
    SimConfig,
    rayleigh_bpsk_ber,
    run_ber_point,
    run_sweep,
    run_trial,
)
