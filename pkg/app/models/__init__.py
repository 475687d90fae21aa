"""Value types: tensors, constitutive model and scenario configuration."""
