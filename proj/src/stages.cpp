// placeholder, replaced by the pipeline stage implementations
