"""Audio-driven 47-channel EEG organoid built on the simulation framework."""

from orgsim.pianoid.dataset import (
    BatchGenerator,
    DatasetStore,
    batches,
    make_dataset,
    split_indices,
    target_indices,
    write_pairs,
)
from orgsim.pianoid.environment import AudioEnvironment, build_audio_env
from orgsim.pianoid.evaluate import evaluate
from orgsim.pianoid.organoid import (
    AudioScheduler,
    EEGCell,
    EEGModule,
    EEGOrganoid,
    audio_step,
    build_pianoid,
    run_simulation,
)
from orgsim.pianoid.synth import SynthResult, Teacher, TeacherConfig, piano_audio, synth_dataset

__all__ = [
    "AudioEnvironment", "AudioScheduler", "BatchGenerator", "DatasetStore", "EEGCell", "EEGModule",
    "EEGOrganoid", "SynthResult", "Teacher", "TeacherConfig", "audio_step", "batches",
    "build_audio_env", "build_pianoid", "evaluate", "make_dataset", "piano_audio",
    "run_simulation", "split_indices", "synth_dataset", "target_indices", "write_pairs",
]
