"""Self-training data pipelines for chain-of-thought language models.

Sample multiple reasoning paths per unlabeled question, select consensus
answers by majority voting, keep the supporting paths, and export them in
four mixed prompting formats as fine-tune-ready datasets. Includes question
and prompt-template self-generation and an evaluation harness for standard,
greedy-CoT, and self-consistency prompting.
"""

from .backend import (
    Backend,
    BackendError,
    CachingBackend,
    CompletionRequest,
    FixtureMissError,
    HTTPBackend,
    MockBackend,
    SampledPath,
    TransportError,
    cache_key,
    complete_batch,
    prompt_digest,
)
from .consensus import (
    CalibrationBucket,
    ConsensusResult,
    calibration_histogram,
    filter_supporting_paths,
    vote,
)
from .corpus import (
    AnswerKind,
    CorpusError,
    Dataset,
    GoldReadError,
    Question,
    TaskSchema,
    forbid_gold_reads,
    gold_read_count,
    load_dataset,
    sample_subset,
)
from .evalharness import EvalMethod, EvalReport, QuestionOutcome, evaluate, format_eval_table, sweep
from .extraction import ExtractedAnswer, answers_equal, extract_answer, normalize
from .pipeline import (
    BackendOutageError,
    ConfigError,
    DatasetSpec,
    FinetuneManifest,
    RunConfig,
    RunManifest,
    SelfImproveResult,
    run_selfimprove,
)
from .prompting import (
    Exemplar,
    FormatTemplates,
    PromptStyle,
    PromptTemplate,
    TrainingExample,
    augment_path,
    bank_templates,
    load_prompt_bank,
    render_prompt,
    strip_reasoning,
)
from .selfgen import (
    GeneratedQuestion,
    GeneratedTemplateSet,
    generate_prompt_templates,
    generate_questions,
    screen_questions,
)

__version__ = "0.1.0"
