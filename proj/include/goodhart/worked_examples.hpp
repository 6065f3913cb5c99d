#pragma once

#include <array>

#include "goodhart/mdp.hpp"

namespace goodhart {

/// Two states, two actions, gamma 0.9, uniform start.
TabularMdp make_m22();

/// R0 (true), R1 and R2 for make_m22(), in (s, a) order.
std::array<RewardVector, 3> m22_rewards();

/// Three states, two actions; state 2 is absorbing. gamma 0.9, uniform start.
TabularMdp make_m32();

std::array<RewardVector, 2> m32_rewards();

}  // namespace goodhart
