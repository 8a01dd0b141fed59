import numpy as np
from django.core.exceptions import ImproperlyConfigured
from django.test import SimpleTestCase

from securekg.exceptions import OutOfRange
from securekg.numeric import (
    DEFAULT_CONFIG, RING_MASK, FixedPointConfig, RingValue, as_ring, decode, decode_array, encode,
    encode_array, exponent_for, ring_mul_truncate, to_signed, truncate_array,
)


class FixedPointTests(SimpleTestCase):
    def test_encode_decode_exact_on_dyadic_values(self):
        for value in (0.0, 1.5, -2.25, 1024.125, -0.0078125):
            self.assertEqual(decode(encode(value)), value)

    def test_negative_values_wrap_to_top_of_ring(self):
        self.assertEqual(encode(-1.0).raw, (1 << 64) - DEFAULT_CONFIG.scale)
        self.assertEqual(RingValue(-1).raw, RING_MASK)
        self.assertEqual(RingValue(RING_MASK).signed, -1)

    def test_encode_rejects_out_of_range(self):
        with self.assertRaises(OutOfRange):
            encode(2.0 ** 21)
        with self.assertRaises(OutOfRange):
            encode_array([1.0, float('nan')])

    def test_product_error_is_at_most_one_ulp(self):
        rng = np.random.default_rng(3)
        for a, b in rng.uniform(-500, 500, size=(200, 2)):
            product = decode(ring_mul_truncate(encode(a), encode(b)))
            exact = decode(encode(a)) * decode(encode(b))
            self.assertLessEqual(abs(product - exact), DEFAULT_CONFIG.ulp)

    def test_product_overflow_raises(self):
        with self.assertRaises(OutOfRange):
            ring_mul_truncate(encode(2.0 ** 15), encode(2.0 ** 15))

    def test_invalid_configs(self):
        with self.assertRaises(ImproperlyConfigured):
            FixedPointConfig(frac_bits=0)
        with self.assertRaises(ImproperlyConfigured):
            FixedPointConfig(total_bits=32)
        with self.assertRaises(ImproperlyConfigured):
            FixedPointConfig(frac_bits=40, magnitude_bound=2.0 ** 30)


class ArrayHelperTests(SimpleTestCase):
    def test_arrays_follow_scalar_encoding(self):
        values = np.array([0.5, -3.75, 100.0])
        raw = encode_array(values)
        self.assertEqual([int(v) for v in raw], [encode(v).raw for v in values])
        np.testing.assert_array_equal(decode_array(raw), values)

    def test_as_ring_and_to_signed(self):
        raw = as_ring(np.array([-1, 0, 5]))
        self.assertEqual(raw.dtype, np.uint64)
        self.assertEqual(int(raw[0]), RING_MASK)
        np.testing.assert_array_equal(to_signed(raw), [-1, 0, 5])

    def test_truncation_rounds_half_up(self):
        np.testing.assert_array_equal(to_signed(truncate_array(as_ring(np.array([-3, 3, 5, -5])), 1)),
                                      [-1, 2, 3, -2])

    def test_exponent_for(self):
        self.assertEqual(exponent_for(8), 4)
        self.assertEqual(exponent_for(7.9), 3)
        self.assertEqual(exponent_for(0.5), 1)

    def test_ring_value_hex(self):
        value = RingValue(0xABC)
        self.assertEqual(value.hex(), '0000000000000abc')
        self.assertEqual(RingValue.from_hex(value.hex()), value)
        self.assertEqual(value + 1, RingValue(0xABD))
        self.assertEqual(1 - value, RingValue(1 - 0xABC))
