# Consensus-on-measurement distributed filtering
from .errors import CMDFError
from .model import SensorModel, SystemModel
from .network import Graph, WeightMatrix

__all__ = ['CMDFError', 'Graph', 'SensorModel', 'SystemModel', 'WeightMatrix']
