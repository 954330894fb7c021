# engine/communicator.py

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List

logger = logging.getLogger(__name__)

CONVERGENCE_KIND = 'converged'


@dataclass(frozen=True)
class Message:
    iteration: int
    sender: str
    kind: str
    payload: Dict[str, float]


@dataclass
class BroadcastLog:
    """Every broadcast, tagged with the iteration it belongs to (0 is the initial round)."""
    messages: List[Message] = field(default_factory=list)

    def record(self, message: Message):
        self.messages.append(message)

    def iterations(self) -> List[int]:
        return sorted({m.iteration for m in self.messages})

    def data_messages(self, iteration: int) -> int:
        return sum(1 for m in self.messages if m.iteration == iteration and m.kind != CONVERGENCE_KIND)

    def announcements(self, iteration: int) -> List[str]:
        return [m.sender for m in self.messages if m.iteration == iteration and m.kind == CONVERGENCE_KIND]

    def summary(self) -> dict:
        kinds = Counter(m.kind for m in self.messages)
        data = [self.data_messages(k) for k in self.iterations() if k > 0]
        return {
            'total_messages': len(self.messages),
            'by_kind': dict(sorted(kinds.items())),
            'iterations': len(data),
            'data_messages_per_iteration': sorted(set(data)),
        }

    def to_rows(self) -> List[dict]:
        rows = []
        for m in self.messages:
            row = {'iteration': m.iteration, 'sender': m.sender, 'kind': m.kind}
            row.update({f"payload_{k}": v for k, v in sorted(m.payload.items())})
            rows.append(row)
        return rows


class BroadcastBus:
    """
    In-process broadcast channel with perfect delivery: a message from one node
    reaches every other registered node immediately and is appended to the log.
    """

    def __init__(self, log: BroadcastLog = None):
        self.nodes = {}  # name -> node object
        self.log = log or BroadcastLog()
        self.iteration = 0

    def register(self, name, node):
        if name in self.nodes:
            raise ValueError(f"node '{name}' is already registered")
        self.nodes[name] = node
        node.bus = self
        logger.debug(f"registered node {name}")

    def begin_iteration(self, iteration: int):
        self.iteration = iteration

    def broadcast(self, sender_name, kind, payload):
        if sender_name not in self.nodes:
            raise ValueError(f"sender '{sender_name}' not registered")
        self.log.record(Message(self.iteration, sender_name, kind, dict(payload)))
        for name, node in self.nodes.items():
            if name != sender_name:
                node.receive_message(sender_name, kind, payload)

    def list_nodes(self):
        return list(self.nodes.keys())
