"""rstgauge: measure, profile and model the errors of RST discourse parsers.

The package covers the full path from corpus files to analysis tables:
reading constituent trees (rs3/dis) and dependency files (rsd), converting
constituents to head dependencies, Parseval scoring, multi-run error
profiling, discourse-marker statistics, regression and boosted-tree
modeling, and a reproducible command-line pipeline.
"""

__version__ = "0.1.0"

from .core import (
    ConstituentNode,
    CorpusError,
    DISTRACTOR,
    DepGraph,
    DepNode,
    DmAnnotation,
    Edu,
    FormatError,
    NUCLEUS,
    ROOT_HEAD,
    ROOT_LABEL,
    RelationScheme,
    RstTree,
    SATELLITE,
    SIGNAL,
    SPAN,
    Token,
    UnknownLabelError,
    load_stoplist,
    validate_tree,
)
from .ingest import (
    Corpus,
    Vocabulary,
    load_corpus,
    load_vocabulary,
    read_dis,
    read_dm_annotations,
    read_embedded_signals,
    read_rs3,
    read_rsd,
    write_dm_annotations,
    write_rs3,
    write_rsd,
)
from .metrics import (
    AgreementScore,
    ErrorProfile,
    ParsevalScore,
    SegmentationError,
    error_profiles,
    majority_predicted_classes,
    micro_average,
    mutual_f1,
    parseval,
)
from .treeops import (
    StructuralProfile,
    SyntaxLayer,
    binarize,
    read_syntax,
    structural_profile,
    to_dependencies,
)

__all__ = [
    "__version__",
    "AgreementScore",
    "ConstituentNode",
    "Corpus",
    "CorpusError",
    "DISTRACTOR",
    "DepGraph",
    "DepNode",
    "DmAnnotation",
    "Edu",
    "ErrorProfile",
    "FormatError",
    "NUCLEUS",
    "ParsevalScore",
    "ROOT_HEAD",
    "ROOT_LABEL",
    "RelationScheme",
    "RstTree",
    "SATELLITE",
    "SIGNAL",
    "SPAN",
    "SegmentationError",
    "StructuralProfile",
    "SyntaxLayer",
    "Token",
    "UnknownLabelError",
    "Vocabulary",
    "binarize",
    "error_profiles",
    "load_corpus",
    "load_stoplist",
    "load_vocabulary",
    "majority_predicted_classes",
    "micro_average",
    "mutual_f1",
    "parseval",
    "read_dis",
    "read_dm_annotations",
    "read_embedded_signals",
    "read_rs3",
    "write_rs3",
    "read_rsd",
    "read_syntax",
    "structural_profile",
    "to_dependencies",
    "validate_tree",
    "write_dm_annotations",
    "write_rsd",
]
