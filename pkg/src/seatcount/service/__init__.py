"""HTTP service wrapping the pipeline."""
