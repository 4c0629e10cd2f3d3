// placeholder, replaced by the ablation harness
