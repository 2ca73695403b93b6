"""Language and vision agents over a pluggable chat backend."""

from .backend import (BackendConfig, ChatBackend, HttpChatBackend, ImagePart, MockChatBackend,
                      build_messages, data_uri)
from .loop import edit_loop, render_samples
from .roles import (SplitDescription, Verdict, adjust, classify_editable, extract_json,
                    generate_fingers, generate_head, judge, sample_frames, sample_indices,
                    split_description)
from .transcript import AgentRecord, AgentTranscript

__all__ = [
    "AgentRecord", "AgentTranscript", "BackendConfig", "ChatBackend", "HttpChatBackend",
    "ImagePart", "MockChatBackend", "SplitDescription", "Verdict", "adjust", "build_messages",
    "classify_editable", "data_uri", "edit_loop", "extract_json", "generate_fingers",
    "generate_head", "judge", "render_samples", "sample_frames", "sample_indices",
    "split_description",
]
