"""BQ-SGD Exceptions"""
from .CorruptMessageException import CorruptMessageException
from .DivergenceException import DivergenceException
from .IncompleteRoundException import IncompleteRoundException
from .InfeasiblePlanException import InfeasiblePlanException
from .InvalidConfigException import InvalidConfigException
from .InvalidInputException import InvalidInputException
from .NetworkException import NetworkException
from .NoPrivacyGuaranteeException import NoPrivacyGuaranteeException
from .UnsupportedFormatException import UnsupportedFormatException
