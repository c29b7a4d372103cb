"""Fiber-optic channel simulation with a conditional-GAN surrogate.

Submodules:

- ``sigproc``   bits, 16QAM, RRC shaping, power, BER counting
- ``fft``       power-of-two FFT
- ``fiber``     split-step Fourier channel and receiver noise
- ``rxdsp``     matched filter, CD compensation, digital backpropagation
- ``nncore``    MLPs, losses, backpropagation, Adam
- ``surrogate`` condition windows, CGAN / FCNN training and inference
- ``harness``   datasets, evaluation, benchmarks, file formats
- ``cli``       ``fibergan`` command
"""

from .errors import (
    ConfigError,
    DegenerateInputError,
    FiberGanError,
    FormatError,
    InputShapeError,
    NumericError,
    TrainingDivergedError,
    WindowOutOfRangeError,
)
from .fiber import FiberParams, NoiseConfig, add_awgn, propagate_ssfm
from .rxdsp import DspMode, cd_compensate, dbp, run_rx_chain
from .sigproc import ComplexSignal, TxConfig, transmit
from .surrogate import CganConfig, CganModel, WindowGeometry, generate_channel_output

__version__ = "0.1.0"
