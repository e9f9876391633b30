"""Polar spectra images, augmentation search, conditional GANs and corner-density filtering."""
__version__ = "0.1.0"
