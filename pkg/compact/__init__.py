__version__ = '0.1.0'

# __all__ = ['base', 'datasets', 'model_zoo', 'distill', 'analysis', 'utils']
