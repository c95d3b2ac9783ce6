"""cloudseed: click-seeded LIDAR instance segmentation and 3D box annotation.

Single annotator clicks on a point cloud seed a three-stage pipeline:
instance segmentation around the click, residual centroid regression,
and template-based amodal box estimation. The package also ships the
annotator training/quality-assurance workflow, the evaluation suite, a
CLI, and an HTTP service for the browser labelling tool.
"""

__version__ = "0.1.0"
