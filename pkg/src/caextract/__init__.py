"""Object extraction from multiband rasters with cellular automata.

The building blocks are usable on their own:

* :mod:`caextract.raster` - raster model, PGM/PPM/MBR I/O, window features
* :mod:`caextract.cnn` - uncoupled cellular neural network edge detector
* :mod:`caextract.kernel_cluster` - mixture-density kernel clustering + ICM refinement
* :mod:`caextract.ca_objects` - CA region growing and object extraction
* :mod:`caextract.coreset` - width coresets and k-line fitting
* :mod:`caextract.maca` - rule-90/150 multiple-attractor CA
* :mod:`caextract.shape_evolve` - GA rule evolution, pattern DB, interpolation
* :mod:`caextract.metrics` - kappa, overall accuracy, areal extent
* :mod:`caextract.pipeline` - end-to-end orchestration
"""

__version__ = "0.1.0"
