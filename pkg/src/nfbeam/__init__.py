"""Near-field beam training for extremely large uniform linear arrays.

Subpackages: ``channel`` (geometry, steering vectors, rates), ``codebook``,
``search`` (codebook baselines), ``scenario`` (drops and datasets), ``nn``
(numpy CNN beamformer) and ``bench`` (sweeps and the ``bench`` command).
"""

__version__ = "0.1.0"
