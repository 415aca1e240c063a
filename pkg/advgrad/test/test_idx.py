from __future__ import absolute_import, division, print_function, unicode_literals
from .. import idx, diagnostic
import os
import struct
import tempfile
import unittest
import numpy as np
import numpy.testing as npt

# Two 2x2 images.
IMAGES = struct.pack(">BBBBIII", 0, 0, 8, 3, 2, 2, 2) + bytes([0, 51, 102, 153, 204, 255, 0, 1])

class ParseIdxTestCase(unittest.TestCase):

    def setUp(self):
        self.engine = diagnostic.Engine()
        self.engine.render_diagnostic = lambda diag: None

    def assertDiagnoses(self, data, message, loc, ndims=None):
        try:
            idx.parse_idx(data, "images.idx", ndims, self.engine)
            self.fail("Expected a diagnostic")
        except diagnostic.Error as e:
            self.assertEqual("fatal", e.diagnostic.level)
            self.assertEqual(message, e.diagnostic.message())
            location = e.diagnostic.location
            self.assertEqual(loc, (location.begin_pos, location.end_pos))

    def test_parse(self):
        array = idx.parse_idx(IMAGES, engine=self.engine)
        self.assertEqual((2, 2, 2), array.shape)
        self.assertEqual(np.uint8, array.dtype)
        npt.assert_array_equal([[0, 51], [102, 153]], array[0])
        npt.assert_array_equal(array, idx.parse_idx(idx.encode_idx(array)))

    def test_magic(self):
        self.assertDiagnoses(b"\x01" + IMAGES[1:], "not an IDX file: bytes 0-1 must be zero", (0, 2))

    def test_element_type(self):
        data = IMAGES[:2] + b"\x0d" + IMAGES[3:]
        self.assertDiagnoses(data, "unsupported IDX element type 0x0d, "
                                   "expected 0x08 (unsigned byte)", (2, 3))

    def test_dimensions(self):
        self.assertDiagnoses(IMAGES, "IDX file has 3 dimensions, expected 1", (3, 4), ndims=1)

    def test_truncated(self):
        self.assertDiagnoses(IMAGES[:2], "truncated IDX header: 2 bytes", (0, 2))
        self.assertDiagnoses(IMAGES[:6],
                             "truncated IDX header: 3 dimension sizes need 16 bytes", (4, 6))
        self.assertDiagnoses(IMAGES[:-1],
                             "truncated IDX payload: shape 2x2x2 needs 8 bytes, found 7", (16, 23))

    def test_trailing(self):
        self.assertDiagnoses(IMAGES + b"\x00\x00", "2 unexpected bytes after the IDX payload",
                             (24, 26))

    def test_encode(self):
        self.assertEqual(IMAGES, idx.encode_idx(idx.parse_idx(IMAGES)))
        self.assertEqual(b"\x00\x00\x08\x01\x00\x00\x00\x02\x07\x09", idx.encode_idx([7, 9]))
        self.assertRaises(ValueError, lambda: idx.encode_idx([256]))
        self.assertRaises(ValueError, lambda: idx.encode_idx([1.5]))


class LoadIdxTestCase(unittest.TestCase):

    def setUp(self):
        self.engine = diagnostic.Engine()
        self.engine.render_diagnostic = lambda diag: None
        self.directory = tempfile.TemporaryDirectory()
        self.images = os.path.join(self.directory.name, "img")
        self.labels = os.path.join(self.directory.name, "lbl")
        with open(self.images, "wb") as f:
            f.write(IMAGES)

    def tearDown(self):
        self.directory.cleanup()

    def test_load(self):
        idx.write_idx(self.labels, np.array([3, 7], dtype=np.uint8))
        loaded = idx.load_idx(self.images, self.labels, self.engine)
        self.assertEqual(2, len(loaded))
        npt.assert_allclose([[0.8, 1.0], [0.0, 1 / 255.0]], loaded.images[1])
        npt.assert_array_equal([3, 7], loaded.labels)
        self.assertEqual("%s,%s" % (self.images, self.labels), loaded.name)

        dataset = loaded.as_dataset()
        self.assertEqual((2, 1, 2, 2), dataset.inputs.shape)
        self.assertEqual(loaded.name, dataset.name)

    def test_count_mismatch(self):
        idx.write_idx(self.labels, np.array([1, 2, 3], dtype=np.uint8))
        with self.assertRaises(diagnostic.Error) as context:
            idx.load_idx(self.images, self.labels, self.engine)
        diag = context.exception.diagnostic
        self.assertEqual("3 labels do not match 2 images", diag.message())
        self.assertEqual((4, 8), (diag.location.begin_pos, diag.location.end_pos))
        self.assertEqual(["%s holds 2 images" % self.images],
                         [note.message() for note in diag.notes])

    def test_labels_dimensions(self):
        with open(self.labels, "wb") as f:
            f.write(IMAGES)
        self.assertRaises(diagnostic.Error,
                          lambda: idx.load_idx(self.images, self.labels, self.engine))

    def test_missing(self):
        self.assertRaises(OSError, lambda: idx.load_idx(self.images, self.labels, self.engine))

    def test_check_fits(self):
        idx.write_idx(self.labels, np.array([1, 9], dtype=np.uint8))
        loaded = idx.load_idx(self.images, self.labels, self.engine)
        loaded.check_fits((4,), 10, self.engine)
        loaded.check_fits((1, 2, 2), 2, self.engine, limit=1)

        with self.assertRaises(diagnostic.Error) as context:
            loaded.check_fits((4,), 2, self.engine)
        diag = context.exception.diagnostic
        self.assertEqual("label 9 of example 1 is out of range for 2 classes", diag.message())
        self.assertEqual((9, 10), (diag.location.begin_pos, diag.location.end_pos))

        with self.assertRaises(diagnostic.Error) as context:
            loaded.check_fits((9,), 10, self.engine)
        diag = context.exception.diagnostic
        self.assertEqual("images of 2x2 do not fit model input 9", diag.message())
        self.assertEqual((8, 16), (diag.location.begin_pos, diag.location.end_pos))

        unlocated = idx.IdxDataset(loaded.images, loaded.labels)
        self.assertRaises(diagnostic.Error, lambda: unlocated.check_fits((4,), 2, self.engine))
