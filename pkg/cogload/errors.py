'''
Exception hierarchy shared by every cogload module.
'''


class CogloadError(Exception):
    '''Base class of all errors raised by cogload.'''


class ShapeError(CogloadError, ValueError):
    '''Operands with incompatible dimensions.'''


class GradientError(CogloadError, ArithmeticError):
    '''A gradient became NaN or infinite.'''


class CheckpointError(CogloadError, IOError):
    '''A checkpoint or dataset file could not be decoded or does not match.'''


class DataError(CogloadError, ValueError):
    '''Malformed gaze data or a dataset too small for the requested operation.'''


class LeakageError(DataError):
    '''The feature scaler saw rows outside the training split.'''


class ConfigError(CogloadError, ValueError):
    '''Invalid run configuration. `key` names the offending entry.'''

    def __init__(self, key, message):
        super().__init__('{}: {}'.format(key, message))
        self.key = key


class TrainingDiverged(CogloadError, FloatingPointError):
    '''
    Training loss became non-finite.
    `checkpoint` holds the last parameters that produced a finite loss.
    '''

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
