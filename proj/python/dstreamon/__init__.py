"""Python access to the dstreamon monitoring core.

Programs are XML documents; compile them to artifacts, run them packet by
packet with an Engine, and generate or read traces to feed it.
"""

from ._core import (
    ArtifactError,
    CountMinSketch,
    Engine,
    Packet,
    artifact_error_kind,
    builtin_program,
    compile,
    decompile,
    read_pcap,
    synthesize,
    validate,
    write_pcap,
)


def run(xml, packets):
    """Runs a program over packets; returns (1-based packet index, event) pairs."""
    engine = Engine(xml)
    return [(i, ev) for i, pkt in enumerate(packets, start=1) for ev in engine.step(pkt)]


__all__ = [
    "ArtifactError",
    "CountMinSketch",
    "Engine",
    "Packet",
    "artifact_error_kind",
    "builtin_program",
    "compile",
    "decompile",
    "read_pcap",
    "run",
    "synthesize",
    "validate",
    "write_pcap",
]
