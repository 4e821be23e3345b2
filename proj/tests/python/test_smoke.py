# SPDX-License-Identifier: Apache-2.0
"""Smoke tests for the python bindings: end-to-end flows, not exhaustive
coverage (the C++ suites own that)."""

import math
import os
import sys
import tempfile
import unittest

import kernelseer as ks


class SpecTest(unittest.TestCase):
    def test_builtin_specs(self):
        specs = ks.builtin_specs()
        names = [s.name for s in specs]
        self.assertIn("ConvAsm1x1U", names)
        self.assertIn("ConvAsmBwdWrW3x3", names)
        asm = ks.builtin_spec("ConvAsm1x1U")
        self.assertEqual(len(asm.params), 8)
        params = dict(asm.params)
        self.assertEqual(params["read_size"], [1, 2, 3, 4])
        self.assertEqual(ks.search_space_size(asm), 3440640)
        self.assertEqual(ks.search_space_size(ks.builtin_spec("ConvAsmBwdWrW3x3")), 20480)

    def test_unknown_kernel_raises(self):
        with self.assertRaises(ks.KernelseerError):
            ks.builtin_spec("Nope")

    def test_custom_spec_line(self):
        spec = ks.parse_kernel_spec("K|tile=1-3|mode=0,1")
        self.assertEqual(ks.search_space_size(spec), 6)


class DataTest(unittest.TestCase):
    def test_synthetic_roundtrip(self):
        spec = ks.builtin_spec("ConvAsmBwdWrW3x3")
        ds = ks.generate_synthetic(spec, 120, seed=5, difficulty="easy")
        self.assertEqual(len(ds), 120)
        again = ks.generate_synthetic(spec, 120, seed=5, difficulty="easy")
        self.assertEqual(
            [ks.format_record(s) for s in ds.samples],
            [ks.format_record(s) for s in again.samples],
        )
        line = ks.format_record(ds.samples[0])
        back = ks.parse_record(line, spec)
        self.assertEqual(ks.format_record(back), line)

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "data.txt")
            ks.save_dataset(ds, path)
            loaded = ks.load_dataset(path, spec)
            self.assertEqual(len(loaded), 120)

    def test_split(self):
        spec = ks.builtin_spec("ConvAsm1x1U")
        ds = ks.generate_synthetic(spec, 100, seed=3)
        train, test = ks.split(ds, test_fraction=0.2, seed=4)
        self.assertEqual(len(train), 80)
        self.assertEqual(len(test), 20)


class ModelTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.spec = ks.builtin_spec("ConvAsmBwdWrW3x3")
        ds = ks.generate_synthetic(cls.spec, 160, seed=9, difficulty="easy")
        cls.train_set, cls.test_set = ks.split(ds, 0.2, seed=2)
        config = ks.ModelConfig(
            variant="hybrid-2",
            conv_layers=[(8, 3, 1)],
            decoder_cell_size=12,
            dropout=0.1,
            recurrent_dropout=0.1,
        )
        cls.params, cls.log = ks.train(
            config,
            cls.spec,
            cls.train_set.samples,
            cls.test_set.samples,
            epochs=4,
            batch_size=16,
            seed=11,
            threads=2,
        )

    def test_training_log(self):
        self.assertEqual(len(self.log), 4)
        self.assertEqual(self.log[0]["epoch"], 1)
        self.assertTrue(math.isfinite(self.log[-1]["test_loss"]))
        # loss should drop on this easily learnable set
        self.assertLess(self.log[-1]["train_loss"], self.log[0]["train_loss"])

    def test_predict_and_constraints(self):
        desc = self.test_set.samples[0].descriptor
        top = ks.predict(self.params, desc, beam_width=3)
        self.assertEqual(len(top), 3)
        self.assertLessEqual(top[1]["log_prob"], top[0]["log_prob"])
        greedy = ks.greedy_predict(self.params, desc)
        self.assertEqual(top[0]["params"], greedy)

        preds = [ks.membership_predicate(self.spec)]
        constrained = ks.predict(self.params, desc, beam_width=3, predicates=preds)
        self.assertEqual([c["params"] for c in constrained], [t["params"] for t in top])
        for c in constrained:
            self.assertIsNone(ks.validate(self.spec, desc, c["params"], preds))

    def test_python_predicate(self):
        desc = self.test_set.samples[0].descriptor
        keep_small = ks.predicate(
            "chunk8", lambda d, partial: partial.get("chunk_size", 8) == 8
        )
        out = ks.predict(self.params, desc, beam_width=4, predicates=[keep_small])
        self.assertTrue(out)
        for entry in out:
            self.assertEqual(entry["params"]["chunk_size"], 8)

    def test_checkpoint_roundtrip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "model.ckpt")
            ks.save_checkpoint(self.params, path)
            loaded = ks.load_checkpoint(path)
            self.assertEqual(loaded.kernel, "ConvAsmBwdWrW3x3")
            desc = self.test_set.samples[0].descriptor
            self.assertEqual(
                ks.greedy_predict(loaded, desc), ks.greedy_predict(self.params, desc)
            )

    def test_topk_metrics(self):
        reports = ks.topk_metrics(
            self.params, self.test_set.samples, [1, 4], threads=2
        )
        self.assertEqual(len(reports), 2)
        self.assertLessEqual(
            reports[0]["perfect_prediction"], reports[1]["perfect_prediction"] + 1e-9
        )
        for r in reports:
            self.assertGreaterEqual(r["average_accuracy"], 0.0)
            self.assertLessEqual(r["average_accuracy"], 100.0)


class BaselineTest(unittest.TestCase):
    def test_knn(self):
        spec = ks.builtin_spec("ConvAsm1x1U")
        ds = ks.generate_synthetic(spec, 400, seed=21, difficulty="easy")
        train, test = ks.split(ds, 0.2, seed=22)
        knn = ks.knn_fit(train.samples, k_neighbors=1)
        hits = 0
        total = 0
        for s in test.samples:
            pred = ks.knn_predict(knn, s.descriptor)
            for name, value in s.params.items():
                total += 1
                hits += pred[name] == value
        self.assertGreater(hits / total, 0.9)

    def test_dtree_and_gnb_run(self):
        spec = ks.builtin_spec("ConvAsmBwdWrW3x3")
        ds = ks.generate_synthetic(spec, 200, seed=31, difficulty="moderate")
        train, test = ks.split(ds, 0.25, seed=32)
        dt = ks.dtree_fit(train.samples, max_depth=6)
        gnb = ks.gnb_fit(train.samples)
        pred = ks.dtree_predict(dt, test.samples[0].descriptor)
        self.assertEqual(set(pred) , set(test.samples[0].params))
        pred2 = ks.gnb_predict(gnb, test.samples[0].descriptor)
        self.assertEqual(set(pred2), set(test.samples[0].params))


if __name__ == "__main__":
    sys.exit(unittest.main())
