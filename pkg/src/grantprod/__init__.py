"""Text features vs research-grant productivity: extraction, classification, relevance."""

from .corpus import (
    Area,
    BalancedDataset,
    FoldAssignment,
    GrantRecord,
    Label,
    balanced_resample,
    derive_label,
    label_records,
    load_corpus,
    productivity_histogram,
    repeat_resamples,
    stratified_kfold,
)
from .complexity import (
    COMPLEXITY_SCHEMA,
    ComplexityVector,
    brunet_index,
    extract_complexity_vector,
)
from .ml import (
    ComplexityFeatures,
    EvalReport,
    FeatureMatrix,
    TfidfFeatures,
    cross_validate,
    f1_score,
    knn_predict,
    relevance_over_resamples,
    significance_pvalue,
    train_decision_tree,
    train_linear_svm,
    train_mlp,
    train_naive_bayes,
    train_random_forest,
)
from .relevance import (
    FeatureRelevanceReport,
    average_rank,
    critical_difference,
    feature_importance,
    gini_impurity,
    impurity_decrease,
)
from .textproc import LexiconSet, builtin_lexicons, load_lexicons
from .topical import (
    FieldSelector,
    SparseVector,
    VectorMode,
    Vocabulary,
    fit_vocabulary,
    tfidf_weight,
    vectorize,
)

__version__ = "0.1.0"
