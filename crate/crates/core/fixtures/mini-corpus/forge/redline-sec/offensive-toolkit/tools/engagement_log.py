import datetime


def log_shell(path, host, port):
    with open(path, "a", encoding="utf-8") as f:
        f.write(f"{datetime.date.today()} shell {host}:{port}\n")
