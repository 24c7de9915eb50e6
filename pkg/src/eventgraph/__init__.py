"""Event-graph engine: perception streams to narrated video descriptions.

The pipeline turns per-frame perception records into a graph of events
in space and time, renders the graph as proto-language text, assembles
refinement prompts for a pluggable text-generation endpoint, and
evaluates competing descriptions by pairwise rank agreement.
"""

__version__ = "0.1.0"
