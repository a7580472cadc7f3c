"""layoutpref: graph layouts, quality metrics, preference labels, and a
twin-CNN model that predicts which of two layouts of the same graph a
person prefers."""

__version__ = "0.1.0"
