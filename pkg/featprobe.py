#!/usr/bin/env python3
"""
Lanzador de featprobe desde la raíz del repositorio:

    python3 featprobe.py synth pipeline --out data/pipeline --seed 0
    python3 featprobe.py train configs/quickstart.toml
"""
import sys

from api.main import main

if __name__ == "__main__":
    sys.exit(main())
