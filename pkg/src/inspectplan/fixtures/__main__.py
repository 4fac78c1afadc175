from . import build_all

for path in build_all():
    print(path)
