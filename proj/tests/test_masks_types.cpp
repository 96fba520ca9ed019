#include <doctest.h>

#include "oracles.hpp"
#include "skinseg/masks.hpp"

using namespace skinseg;

TEST_CASE("derive_body_mask: empty scene stays empty") {
  PartMask p;
  p.codes = MaskPlane::Zero(4, 4);
  const BinaryMask body = derive_body_mask(p);
  CHECK(body.values.sum() == 0);
}

TEST_CASE("derive_body_mask: definitional 2x2") {
  PartMask p;
  p.codes.resize(2, 2);
  p.codes << 0, 2, 3, 1;
  const BinaryMask body = derive_body_mask(p);
  CHECK(body.values(0, 0) == 0);
  CHECK(body.values(0, 1) == 1);
  CHECK(body.values(1, 0) == 1);
  CHECK(body.values(1, 1) == 1);
}

TEST_CASE("derive_face_hand_mask: all-body scene has no face/hands") {
  PartMask p;
  p.codes = MaskPlane::Constant(3, 5, PartMask::kBody);
  CHECK(derive_face_hand_mask(p).values.sum() == 0);
}

TEST_CASE("derive_face_hand_mask: definitional 2x2") {
  PartMask p;
  p.codes.resize(2, 2);
  p.codes << 2, 0, 1, 3;
  const BinaryMask fh = derive_face_hand_mask(p);
  CHECK(fh.values(0, 0) == 1);
  CHECK(fh.values(0, 1) == 0);
  CHECK(fh.values(1, 0) == 0);
  CHECK(fh.values(1, 1) == 1);
}

TEST_CASE("mask derivation matches the per-pixel rule on random inputs") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const skinseg::PartMask p = oracle::random_parts(9, 7, rng);
    const BinaryMask body = derive_body_mask(p);
    const BinaryMask fh = derive_face_hand_mask(p);
    for (int y = 0; y < 9; ++y) {
      for (int x = 0; x < 7; ++x) {
        CHECK(body.values(y, x) == (p.codes(y, x) >= 1 ? 1 : 0));
        CHECK(fh.values(y, x) == ((p.codes(y, x) == 2 || p.codes(y, x) == 3) ? 1 : 0));
        CHECK(body.values(y, x) >= fh.values(y, x));  // face/hand ⊆ body
      }
    }
  }
}

TEST_CASE("resize_mask: constant masks are invariant") {
  BinaryMask m;
  m.values = MaskPlane::Constant(4, 4, 1);
  const BinaryMask r = resize_mask(m, 2, 2);
  CHECK(r.values.rows() == 2);
  CHECK((r.values.array() == 1).all());
}

TEST_CASE("resize_mask: 2x2 identity upsamples to 2x2 blocks") {
  BinaryMask m;
  m.values.resize(2, 2);
  m.values << 1, 0, 0, 1;
  const BinaryMask r = resize_mask(m, 4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      CHECK(r.values(y, x) == m.values(y / 2, x / 2));
    }
  }
}

TEST_CASE("resize_mask: 8x8 -> 3x3 matches the floor(i*8/3) index oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const BinaryMask m = oracle::random_mask(8, 8, rng);
    const BinaryMask r = resize_mask(m, 3, 3);
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 3; ++x) {
        CHECK(r.values(y, x) == m.values((y * 8) / 3, (x * 8) / 3));
      }
    }
  }
}

TEST_CASE("resize_mask: idempotent at identical dims, binary for arbitrary inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = rng.uniform_int(1, 12);
    const int w = rng.uniform_int(1, 12);
    const BinaryMask m = oracle::random_mask(h, w, rng, 0.3);
    const BinaryMask same = resize_mask(m, h, w);
    CHECK((same.values.array() == m.values.array()).all());
    const BinaryMask other = resize_mask(m, rng.uniform_int(1, 15), rng.uniform_int(1, 15));
    CHECK((other.values.array() <= 1).all());
  }
}

TEST_CASE("image validator enforces range and divisibility") {
  Tensor<Real> ok(3, 8, 8);
  ok.m.setConstant(0.5);
  CHECK_NOTHROW(validate_image(ok));

  Tensor<Real> bad_range = ok;
  bad_range.m(0, 0) = 1.5;
  CHECK_THROWS_AS(validate_image(bad_range), DataError);

  Tensor<Real> bad_dims(3, 12, 8);
  CHECK_THROWS_AS(validate_image(bad_dims), DataError);
}

TEST_CASE("part code validation rejects out-of-range codes") {
  MaskPlane codes = MaskPlane::Zero(2, 2);
  CHECK_NOTHROW(validate_part_codes(codes));
  codes(1, 1) = 4;
  CHECK_THROWS_AS(validate_part_codes(codes), DataError);
}
