"""Open-ended 3D object category learning from orthographic views.

Pipeline: principal-axis reference frame -> three orthographic depth views ->
per-view block descriptors -> element-wise max-pooled global feature ->
instance-based nearest-neighbour memory. Also provides a simulated-teacher
evaluation protocol and grasp templates for familiar objects.
"""

from .cloud_io import (
    PointCloud,
    RigidScaleTransform,
    apply_transform,
    generate_shape,
    load_dataset,
    parse_cloud,
    read_cloud,
    synthetic_category_dataset,
    write_cloud,
)
from .descriptor import (
    DescriptorConfig,
    GlobalFeature,
    ViewFeature,
    describe_view,
    extract,
    global_feature,
    load_external_view_feature,
    pool_max,
)
from .frame import ReferenceFrame, canonicalize, centroid, compute_reference_frame
from .grasp import GripperPose, GraspTemplate, TemplateStore, learn_grasp, recognize_grasp
from .memory import CategoryMemory, Prediction
from .ortho import ViewGrid, project, project_all
from .protocol import (
    ExperimentReport,
    ProtocolConfig,
    TeachingEvent,
    compute_apa,
    compute_gca,
    run_experiment,
    summarize,
)

__version__ = "0.1.0"
