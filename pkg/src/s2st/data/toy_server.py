"""Run the toy helper behind the wire protocol: requests on stdin,
responses on stdout, one JSON object per line.

    python3 -m s2st.data.toy_server --templates DIR/templates.json \
        --out-dir DIR/tts [--mt-mapping secondary]
"""

from __future__ import annotations

import argparse
import json
import sys

from .toy import ToyBackend, ToyWorld


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="toy_server", description=__doc__)
    parser.add_argument("--templates", required=True,
                        help="templates.json from corpus generation")
    parser.add_argument("--out-dir", required=True,
                        help="directory for synthesized audio")
    parser.add_argument("--mt-mapping", default="secondary",
                        choices=("primary", "secondary"))
    args = parser.parse_args(argv)

    backend = ToyBackend(ToyWorld.load(args.templates), args.out_dir,
                         mt_mapping=args.mt_mapping)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            print(json.dumps({"id": "", "ok": False, "err": "malformed request"}),
                  flush=True)
            continue
        print(json.dumps(backend.handle(req), ensure_ascii=False), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
