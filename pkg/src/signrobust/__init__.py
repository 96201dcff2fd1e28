"""Train a small CNN on traffic-sign-like images and measure how FGSM and PGD
attacks erode its accuracy."""

__version__ = "0.1.0"
