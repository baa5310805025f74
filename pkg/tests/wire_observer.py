#!/usr/bin/env python3
"""Scriptable stdio observer for transport tests.

Reads newline JSON requests and answers one line per request. The mode
argument selects the behavior:

    echo      detections mirror the requested objects (default score 1.0)
    wrong-id  echoes canvas_id + 1
    bad-score detections carry score 1.5
    garbage   answers a non-JSON line
    die       exits immediately without reading
"""
import json
import sys


def main() -> int:
    mode = sys.argv[1] if len(sys.argv) > 1 else "echo"
    score = float(sys.argv[2]) if len(sys.argv) > 2 else 1.0
    if mode == "die":
        return 0
    for line in sys.stdin:
        request = json.loads(line)
        if mode == "garbage":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            continue
        canvas_id = request["canvas_id"] + (1 if mode == "wrong-id" else 0)
        detections = [
            {"bbox": obj["bbox"], "category_id": obj["category_id"],
             "score": 1.5 if mode == "bad-score" else score}
            for obj in request["objects"]
        ]
        sys.stdout.write(json.dumps({"canvas_id": canvas_id,
                                     "detections": detections}) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
