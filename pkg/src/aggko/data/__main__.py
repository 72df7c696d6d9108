from . import write_fixture

print("signal taxa:", ", ".join(write_fixture()))
