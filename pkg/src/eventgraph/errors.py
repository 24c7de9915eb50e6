"""Exception types raised across the engine.

Every error the engine can signal is a named class so callers (CLI,
service) can map them to exit codes / HTTP statuses without string
matching.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


# --- ingest ---------------------------------------------------------------

class MalformedRecord(EngineError):
    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class NonMonotonicFrames(EngineError):
    def __init__(self, line_number: int, frame_index: int, previous: int):
        self.line_number = line_number
        self.frame_index = frame_index
        self.previous = previous
        super().__init__(
            f"line {line_number}: frame_index {frame_index} does not increase "
            f"over previous frame {previous}"
        )


class DuplicateTrackInFrame(EngineError):
    def __init__(self, frame_index: int, track_id: int):
        self.frame_index = frame_index
        self.track_id = track_id
        super().__init__(
            f"frame {frame_index}: track {track_id} appears in more than one mask"
        )


# --- identity --------------------------------------------------------------

class OutOfRangePixel(EngineError):
    def __init__(self, pixel, reason: str):
        self.pixel = pixel
        super().__init__(f"pixel {pixel!r} out of range: {reason}")


class NoMasks(EngineError):
    pass


class ZeroVector(EngineError):
    pass


# --- graph -----------------------------------------------------------------

class UnknownNode(EngineError):
    def __init__(self, node_id):
        self.node_id = node_id
        super().__init__(f"node {node_id} not in graph")


class NotCollapsed(EngineError):
    def __init__(self, node_id):
        self.node_id = node_id
        super().__init__(f"node {node_id} is a leaf event, not a collapsed subgraph")


class MalformedGraph(EngineError):
    pass


# --- refine / judging ------------------------------------------------------

class EndpointUnavailable(EngineError):
    pass


class AuthMissing(EngineError):
    def __init__(self, env_var: str):
        self.env_var = env_var
        super().__init__(f"credential environment variable {env_var} is not set")


class MalformedResponse(EngineError):
    pass


class UnparseableRanking(EngineError):
    pass


class UnparseableVerdict(EngineError):
    pass


# --- evaluation ------------------------------------------------------------

class MismatchedDescriptionSets(EngineError):
    pass


class IncompleteJury(EngineError):
    pass


class MissingDuration(EngineError):
    def __init__(self, video_id: str):
        self.video_id = video_id
        super().__init__(f"no duration known for video {video_id}")


# --- annotation service ----------------------------------------------------

class UnknownRater(EngineError):
    def __init__(self, rater_id: str):
        self.rater_id = rater_id
        super().__init__(f"rater {rater_id!r} is not registered")


class NoTasksLeft(EngineError):
    pass


class IncompleteRanking(EngineError):
    pass


# --- synth / config ----------------------------------------------------------

class InvalidScript(EngineError):
    pass


class ConfigError(EngineError):
    def __init__(self, key: str, reason: str):
        self.key = key
        super().__init__(f"config key {key!r}: {reason}")
