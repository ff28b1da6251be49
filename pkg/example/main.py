import logging
import os

from advmod.config import load_config
from advmod.evaluation import snr_sweep
from advmod.trainer import evaluation_batch, train

logging.basicConfig(level=logging.INFO)

config = load_config(os.path.join(os.path.dirname(__file__), "configs", "awgn_small.json"))

alice, bob, eve, history = train(config)
print("Final losses: {}".format(history[-1]))

table = snr_sweep(alice, bob, eve, config, [0, 10, 20, 30, 40], evaluation_batch(config))
for row in table:
    print(row)
