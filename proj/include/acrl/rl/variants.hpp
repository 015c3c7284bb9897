#pragma once

#include "acrl/mappings.hpp"

#include <array>
#include <string_view>

namespace acrl {

enum class Variant { DPro, DProP, DPre, DPreP, DOpt, DOptP, NFW, DAlpha, DRad, SPre, SPreP, SAlpha, SRad };

inline constexpr std::array<Variant, 13> kAllVariants{Variant::DPro,  Variant::DProP, Variant::DPre,  Variant::DPreP,
                                                      Variant::DOpt,  Variant::DOptP, Variant::NFW,   Variant::DAlpha,
                                                      Variant::DRad,  Variant::SPre,  Variant::SPreP, Variant::SAlpha,
                                                      Variant::SRad};

inline constexpr std::array<Family, 7> kAllFamilies{Family::N, Family::L2, Family::O, Family::M,
                                                    Family::T, Family::OS, Family::MA};

enum class BaseAlgo { TD3, SAC };

/// Which action the critic is trained and queried with.
enum class CriticInput { PreMap, Executed };

/// How the mapping enters the actor gradient.
enum class ActorGradient { Plain, InjectJacobian, FrankWolfe };

struct VariantTraits {
  BaseAlgo algo;
  CriticInput critic_input;
  MappingKind mapping;
  ActorGradient gradient;
  bool penalty;
  bool squash_before_mapping; // per-coordinate tanh ahead of the mapping
};

inline std::string_view variant_name(Variant v) {
  switch (v) {
  case Variant::DPro: return "DPro";
  case Variant::DProP: return "DPro+";
  case Variant::DPre: return "DPre";
  case Variant::DPreP: return "DPre+";
  case Variant::DOpt: return "DOpt";
  case Variant::DOptP: return "DOpt+";
  case Variant::NFW: return "NFW";
  case Variant::DAlpha: return "DAlpha";
  case Variant::DRad: return "DRad";
  case Variant::SPre: return "SPre";
  case Variant::SPreP: return "SPre+";
  case Variant::SAlpha: return "SAlpha";
  case Variant::SRad: return "SRad";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : kAllVariants)
    if (variant_name(v) == s) return v;
  throw std::invalid_argument("unknown variant: " + std::string(s));
}

/// Per-variant wiring. Without constraints every mapping is the identity.
inline VariantTraits traits(Variant v, Family family = Family::L2) {
  using enum MappingKind;
  VariantTraits t{};
  switch (v) {
  case Variant::DPro:
  case Variant::DProP:
    t = {BaseAlgo::TD3, CriticInput::Executed, ClosestPoint, ActorGradient::Plain, v == Variant::DProP, true};
    break;
  case Variant::DPre:
  case Variant::DPreP:
    t = {BaseAlgo::TD3, CriticInput::PreMap, ClosestPoint, ActorGradient::Plain, v == Variant::DPreP, true};
    break;
  case Variant::DOpt:
  case Variant::DOptP:
    t = {BaseAlgo::TD3, CriticInput::Executed, ClosestPoint, ActorGradient::InjectJacobian, v == Variant::DOptP, true};
    break;
  case Variant::NFW:
    t = {BaseAlgo::TD3, CriticInput::Executed, ClosestPoint, ActorGradient::FrankWolfe, false, true};
    break;
  case Variant::DAlpha:
    t = {BaseAlgo::TD3, CriticInput::Executed, AlphaProjection, ActorGradient::InjectJacobian, false, true};
    break;
  case Variant::DRad:
    t = {BaseAlgo::TD3, CriticInput::Executed, RadialSquashing, ActorGradient::InjectJacobian, false, true};
    break;
  case Variant::SPre:
  case Variant::SPreP:
    t = {BaseAlgo::SAC, CriticInput::PreMap, ClosestPoint, ActorGradient::Plain, v == Variant::SPreP, true};
    break;
  case Variant::SAlpha:
    t = {BaseAlgo::SAC, CriticInput::Executed, AlphaProjection, ActorGradient::InjectJacobian, false, false};
    break;
  case Variant::SRad:
    t = {BaseAlgo::SAC, CriticInput::Executed, RadialSquashing, ActorGradient::InjectJacobian, false, true};
    break;
  }
  if (family == Family::N) {
    t.mapping = Identity;
    t.squash_before_mapping = true;
    if (t.gradient == ActorGradient::InjectJacobian) t.gradient = ActorGradient::Plain;
  }
  return t;
}

} // namespace acrl
