"""Low-frequency curriculum + Gaussian noise patching for student-teacher ViTs."""

__version__ = "0.1.0"
