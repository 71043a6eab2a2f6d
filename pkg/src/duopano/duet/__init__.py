"""Toy dual-branch denoiser: synthetic data, training, and loop-closure DDIM sampling."""
