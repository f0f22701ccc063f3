"""Line-protocol forecasting adapter with a frozen encoder and a fine-tunable head."""

__version__ = "0.1.0"
