"""兼容入口：转发到 mlfsi/fsi.py。"""
from mlfsi.fsi import main

if __name__ == "__main__":
    raise SystemExit(main())
