"""Protocol Repository
===================
Writes the communication event log: one CSV row per event with the
requester, the nodes whose trigger fired, the request sample and the
norm of every payload.
Rows back On/Off request timelines for any node.
"""

import csv
from collections.abc import Sequence
from pathlib import Path

from app.services.protocol.protocol_service import CommEvent


class ProtocolRepository:
    def write_events(
        self,
        path: Path,
        events: Sequence[CommEvent],
        nodes: int,
        fs: float,
        header: Sequence[str] = (),
    ) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                [
                    "sample_index",
                    "time_s",
                    "requester_id",
                    "policy",
                    "triggered",
                    "request_sample",
                    *(f"phi_norm_{m + 1}" for m in range(nodes)),
                ]
            )
            for event in events:
                writer.writerow(
                    [
                        event.sample,
                        repr(event.sample / fs),
                        event.requester + 1,
                        event.policy,
                        ";".join(str(t + 1) for t in event.triggered),
                        event.request_sample,
                        *(repr(v) for v in event.phi_norms(nodes)),
                    ]
                )
        return path

    def read_events(self, path: Path) -> list[dict[str, str]]:
        with path.open(newline="") as fh:
            rows = (line for line in fh if not line.startswith("#"))
            return list(csv.DictReader(rows))
