"""Coefficient estimation for finite-basis bandlimited signals from jittered samples."""

from .crb import FisherEstimate, crb_values, fisher_complete, fisher_incomplete, fisher_term
from .em import EmSettings, EmTrace, Init, Termination, e_step_moments, m_step, run_em
from .likelihood import LikelihoodContext, log_likelihood, marginal_pdf, marginal_pdf_grad
from .linear import (ExpectedBasis, IllConditionedError, blue_diagnostic, expected_H, linear_nojitter,
                     linear_unbiased)
from .model import ModelConfig, SampleSet, basis_row, build_H, generate_samples, sinc
from .quadrature import (Family, QuadratureRule, gauss_hermite_rule, gauss_legendre_rule, integrate,
                         select_rule, tan_remap, tridiagonal_eigen)

__version__ = "0.1.0"
