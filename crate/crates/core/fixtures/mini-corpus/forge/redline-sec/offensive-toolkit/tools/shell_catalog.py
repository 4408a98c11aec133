"""Catalog of reverse shell one-liners and listener commands for lab use."""

SHELLS = {
    "bash": "reverse shell via bash interactive mode",
    "python": "reverse shell via python socket",
    "netcat": "listener via netcat",
}


def one_liner(kind, host, port):
    return f"{kind} reverse shell to {host}:{port} (see shells.sh)"


def listener(port):
    return f"listener on port {port}"
