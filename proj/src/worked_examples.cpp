#include "goodhart/worked_examples.hpp"

namespace goodhart {

TabularMdp make_m22() {
  Matrix t(4, 2);
  t << 0.9, 0.1,   // s0 a0
      0.1, 0.9,    // s0 a1
      0.5, 0.5,    // s1 a0
      0.8, 0.2;    // s1 a1
  return TabularMdp(2, 2, t, Vector::Constant(2, 0.5), 0.9, {false, false});
}

std::array<RewardVector, 3> m22_rewards() {
  Vector r0(4), r1(4), r2(4);
  r0 << 0.170, 0.228, 0.538, 0.064;
  r1 << 0.248, 0.196, 0.467, 0.089;
  r2 << 0.325, 0.165, 0.396, 0.114;
  return {RewardVector(r0), RewardVector(r1), RewardVector(r2)};
}

TabularMdp make_m32() {
  Matrix t(6, 3);
  t << 0.9, 0.1, 0.0,
      0.1, 0.9, 0.0,
      0.1, 0.9, 0.0,
      0.9, 0.1, 0.0,
      0.0, 0.0, 1.0,
      0.0, 0.0, 1.0;
  return TabularMdp(3, 2, t, Vector::Constant(3, 1.0 / 3.0), 0.9, {false, false, true});
}

std::array<RewardVector, 2> m32_rewards() {
  Vector r0(6), r1(6);
  r0 << 0.290, 0.020, 0.191, 0.202, 0.263, 0.034;
  r1 << 0.263, 0.195, 0.110, 0.090, 0.161, 0.181;
  return {RewardVector(r0), RewardVector(r1)};
}

}  // namespace goodhart
