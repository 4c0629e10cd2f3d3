// placeholder, replaced by the run config implementation
