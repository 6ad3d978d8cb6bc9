from __future__ import print_function, absolute_import, division


class Error(Exception):
    """Base recist2vol exception class for all other errors."""


class VolumeFormatError(Error):
    def __init__(self, path, reason):
        message = "%s: %s" % (path, reason)
        super(VolumeFormatError, self).__init__(message)
        self.path = path
        self.reason = reason


class WindowError(Error):
    def __init__(self, window):
        lo, hi = window
        message = "invalid intensity window: lo=%r must be below hi=%r" % (lo, hi)
        super(WindowError, self).__init__(message)
        self.window = window


class RoiError(Error):
    pass


class AnnotationError(Error):
    pass


class EmptyMaskError(Error):
    pass


class NetworkError(Error):
    pass


class InsufficientSamplesError(Error):
    def __init__(self, n_samples, k):
        message = "cannot fit %d components to %d samples" % (k, n_samples)
        super(InsufficientSamplesError, self).__init__(message)
        self.n_samples = n_samples
        self.k = k


class MissingSeedsError(Error):
    def __init__(self, missing):
        self.missing = tuple(missing)

    def __str__(self):
        return "seed mask has no %s pixels" % " or ".join(self.missing)


class EmptyRegionError(Error):
    pass


class ModelFormatError(Error):
    pass


class PhantomSpecError(Error):
    pass


class EmptyDatasetError(Error):
    pass


class DimensionMismatchError(Error):
    def __init__(self, *shapes):
        self.shapes = shapes

    def __str__(self):
        return "dimension mismatch: %s" % ", ".join(
            "x".join(str(n) for n in shape) for shape in self.shapes)
