"""Adaptive verifiable coded computing for distributed logistic regression.

Data is Lagrange-coded over a prime field, worker results are checked with
Freivalds-style keys before decoding, and the code dimension adapts to the
stragglers and Byzantine workers observed each iteration.
"""
from .adapt import EpochObservation, SchemeTransition, next_scheme
from .coding import CodingScheme, check_feasible, decode, encode
from .config import ExperimentConfig
from .errors import AVCCError
from .experiment import compare_runs, run_experiment
from .field import PrimeField, QuantParams, dequantize, quantize
from .verify import VerificationKeyPair, gen_keys

__version__ = "0.1.0"

__all__ = [
    "AVCCError", "CodingScheme", "EpochObservation", "ExperimentConfig", "PrimeField",
    "QuantParams", "SchemeTransition", "VerificationKeyPair", "check_feasible", "compare_runs",
    "decode", "dequantize", "encode", "gen_keys", "next_scheme", "quantize", "run_experiment",
]
