"""cascade-extract: LLM feature dumps in the cascadekit record format."""

__version__ = "0.1.0"

from .job import ExtractionJob, JobError, load_job
from .extract import run_job

__all__ = ["ExtractionJob", "JobError", "load_job", "run_job", "__version__"]
