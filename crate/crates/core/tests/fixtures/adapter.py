"""Test adapter speaking the prediction protocol over stdio.

Usage: adapter.py MODE [ARG]

  echo P0,P1,...   fixed distribution, input shape 2x2x3
  linear MODEL     linear softmax model from a saco model file
  error            answers every predict with an error
  bad-simplex      probabilities that do not sum to one
  die-after N      exits after N predictions

Requests are answered from worker threads after a short random delay, so
responses arrive out of order.
"""

import base64
import json
import random
import struct
import sys
import threading
import time

import numpy as np

mode = sys.argv[1]
arg = sys.argv[2] if len(sys.argv) > 2 else None
out_lock = threading.Lock()

if mode == "linear":
    with open(arg) as f:
        model = json.load(f)
    shape = model["input_shape"]
    weights = np.array(model["weights"], dtype=np.float64)
    biases = np.array(model["biases"], dtype=np.float64)
    info = {"num_classes": len(biases), "input_shape": shape, "model_name": model["name"]}
else:
    shape = [2, 2, 3]
    probs = [float(p) for p in arg.split(",")] if mode == "echo" else [0.25, 0.75]
    info = {"num_classes": len(probs), "input_shape": shape, "model_name": "fixture-" + mode}

served = 0


def reply(obj):
    with out_lock:
        sys.stdout.write(json.dumps(obj) + "\n")
        sys.stdout.flush()


def answer(req):
    time.sleep(random.random() * 0.005)
    rid = req.get("id")
    if list(req["shape"]) != list(shape):
        reply({"id": rid, "error": "shape mismatch"})
        return
    raw = base64.b64decode(req["data_b64"])
    x = np.array(struct.unpack("<%df" % (len(raw) // 4), raw), dtype=np.float64)
    if mode == "linear":
        logits = weights @ x + biases
        e = np.exp(logits - logits.max())
        reply({"id": rid, "probs": (e / e.sum()).tolist()})
    elif mode == "error":
        reply({"id": rid, "error": "model exploded"})
    elif mode == "bad-simplex":
        reply({"id": rid, "probs": [0.5, 0.7]})
    else:
        reply({"id": rid, "probs": probs})


for line in sys.stdin:
    req = json.loads(line)
    if req.get("op") == "metadata":
        reply(info)
        continue
    if mode == "die-after":
        if served >= int(arg):
            sys.exit(0)
        served += 1
        answer(req)
        continue
    threading.Thread(target=answer, args=(req,)).start()
