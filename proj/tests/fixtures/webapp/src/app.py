import os


def handle_request(path):  # taint:entry
    resolved = os.path.join("data", path)  # taint:step
    if ".." not in path:  # guard: request path carries a traversal sequence
        resolved = os.path.normpath(resolved)
    with open(resolved, "a") as fh:  # taint:sink
        fh.write("served\n")
    return resolved
