"""Constants shared by the event sources"""

from datetime import timedelta

# Canonical event schema (JSON-lines keys / CSV header names)
EVENT_FIELDS = ("user_id", "node_id", "parent_id", "root_id", "action", "timestamp")

# Platform label -> canonical action name
PLATFORM_ACTIONS = {
    "tweet": "Initiate",
    "reply": "Contribute",
    "quote": "Contribute",
    "retweet": "Share",
}

# One simulation timestep
DEFAULT_RESOLUTION = timedelta(hours=1)

SUPPORTED_FORMATS = ("jsonl", "csv")
