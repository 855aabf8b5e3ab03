# Utils package for the cmdf experiment runner
from .scenario_registry import BUILTIN_SCENARIOS, get_builtin_scenario, load_scenario

__all__ = ['BUILTIN_SCENARIOS', 'get_builtin_scenario', 'load_scenario']
