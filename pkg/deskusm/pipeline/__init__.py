from .config import (
    DEFAULT_GRAPHEMES,
    TrainConfig,
    build_config,
    fingerprint,
    load_config,
    load_config_file,
    parse_config_text,
    parse_overrides,
    resolved_text,
)
from .metrics import MetricsWriter, read_metrics
from .data import (
    MANIFEST_COLUMNS,
    Utterance,
    featurize,
    featurize_all,
    load_utterances,
    read_manifest,
    read_text_corpus,
    write_manifest,
)
from .checkpoint import (
    Checkpoint,
    check_resume,
    init_encoder_from,
    latest_checkpoint,
    list_checkpoints,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from .scoring import EditCounts, cer, char_counts, edit_counts, wer, word_counts
from .synth import SynthSpec, concatenate_clips, load_synth_spec, render_text, synth_corpus, tone_table, write_longform
from .evaluate import EvalReport, Transcriber, evaluate, evaluate_checkpoint, load_adapted
from .rtf import RtfReport, hardware_info, pack_batch, rtf_bench
from .train import (
    RUNNERS,
    Diverged,
    adapt,
    build_optimizer,
    finetune,
    most,
    nst,
    pretrain,
    pseudo_label_stage,
    run_loop,
    run_stage,
    sample_indices,
    step_rng,
)

__all__ = [
    "DEFAULT_GRAPHEMES",
    "TrainConfig",
    "build_config",
    "fingerprint",
    "load_config",
    "load_config_file",
    "parse_config_text",
    "parse_overrides",
    "resolved_text",
    "MetricsWriter",
    "read_metrics",
    "MANIFEST_COLUMNS",
    "Utterance",
    "featurize",
    "featurize_all",
    "load_utterances",
    "read_manifest",
    "read_text_corpus",
    "write_manifest",
    "Checkpoint",
    "check_resume",
    "init_encoder_from",
    "latest_checkpoint",
    "list_checkpoints",
    "load_checkpoint",
    "model_from_checkpoint",
    "save_checkpoint",
    "EditCounts",
    "cer",
    "char_counts",
    "edit_counts",
    "wer",
    "word_counts",
    "SynthSpec",
    "concatenate_clips",
    "load_synth_spec",
    "render_text",
    "synth_corpus",
    "tone_table",
    "write_longform",
    "EvalReport",
    "Transcriber",
    "evaluate",
    "evaluate_checkpoint",
    "load_adapted",
    "RtfReport",
    "hardware_info",
    "pack_batch",
    "rtf_bench",
    "RUNNERS",
    "Diverged",
    "adapt",
    "build_optimizer",
    "finetune",
    "most",
    "nst",
    "pretrain",
    "pseudo_label_stage",
    "run_loop",
    "run_stage",
    "sample_indices",
    "step_rng",
]
