"""BQ privacy accounting"""
from .PrivacyAccountant import (
    ClientDataProfile,
    ComposedPrivacy,
    LedgerEntry,
    PrivacyLedger,
    PrivacySpec,
    amplify_by_subsampling,
    binomial_pmax,
    compose,
    gaussian_pmax,
    min_bits_for_privacy,
    per_round_privacy,
    per_round_privacy_gaussian,
    pre_amplification_privacy,
    sensitivity_bound,
)
