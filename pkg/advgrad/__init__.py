"""
advgrad is a toolbox for adversarial robustness research: gradient and
search attacks, preprocessing defenses and adversarial training, built
on a small reverse-mode automatic differentiation engine.
"""

from __future__ import absolute_import, division, print_function, unicode_literals

__version__ = "0.3.0"

def report_version():
    """
    Returns the ``MAJOR.MINOR`` part of :data:`__version__`, the version
    recorded in benchmark reports.
    """
    return ".".join(__version__.split(".")[:2])
