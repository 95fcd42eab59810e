"""Text refinement against regional and global visual tokens, then a class readout.

Refinement layers let every text token attend over the concatenation of the
regional and global visual tokens with one softmax, so the order of the two
sets does not matter. ``text_alignment`` exposes the text-to-vision score map
on its own for inspection.
"""

import numpy as np

from groundcot.textcot import TextCotConfig, classify, init_textcot, refine, text_alignment

cfg = TextCotConfig(layers=2, heads=2, width=8, classes=3)
params = init_textcot(cfg, seed=6)
rng = np.random.default_rng(6)
text = rng.standard_normal((4, 8))
v_regional = rng.standard_normal((4, 8))
v_global = rng.standard_normal((16, 8))

s = text_alignment(text, np.concatenate([v_regional, v_global]), params)
print("alignment map", s.shape, "row sums", np.round(s.sum(axis=1), 12))

a = refine(text, v_regional, v_global, params, cfg)
b = refine(text, v_global, v_regional, params, cfg)
print("refined text", a.shape, "| swap regional/global changes output by", float(np.max(np.abs(a - b))))
print("class logits:", np.round(classify(text, v_regional, v_global, params, cfg), 4))
