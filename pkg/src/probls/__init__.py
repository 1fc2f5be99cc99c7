"""Probabilistic line searches for stochastic optimization."""
from .bvn import BvnQuery, bvn_prob
from .candidates import CandidateList, generate as generate_candidates
from .controller import SearchOutcome, begin, propagate
from .driver import RunConfig, RunTrace, run
from .estimator import LineSearchSGDClassifier
from .gp import KernelParams, Observation, SurrogatePosterior, kernel, posterior_from
from .objectives import Dataset, ProblemSpec, gen_synth, load_csv, make_problem, write_csv
from .wolfe import WolfeParams, p_wolfe, wolfe_belief

__version__ = "0.1.0"

__all__ = [
    "BvnQuery", "bvn_prob", "CandidateList", "generate_candidates", "SearchOutcome", "begin",
    "propagate", "RunConfig", "RunTrace", "run", "LineSearchSGDClassifier", "KernelParams",
    "Observation", "SurrogatePosterior", "kernel", "posterior_from", "Dataset", "ProblemSpec",
    "gen_synth", "load_csv", "make_problem", "write_csv", "WolfeParams", "p_wolfe", "wolfe_belief",
]
