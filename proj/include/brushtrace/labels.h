#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace brushtrace {

// Patch classes, in logit order.
enum class ClassLabel : std::uint8_t { Blank = 0, Human = 1, Robot = 2 };
inline constexpr int kNumClasses = 3;
inline constexpr std::array<ClassLabel, 3> kAllClasses = {ClassLabel::Blank, ClassLabel::Human, ClassLabel::Robot};

// Who painted a canvas.
enum class Author : std::uint8_t { Human, Robot, Hybrid };

// Painting-level verdict from patch aggregation.
enum class Verdict : std::uint8_t { Human, Robot, Indeterminate };

constexpr int index_of(ClassLabel c) { return static_cast<int>(c); }
ClassLabel class_from_index(int i);

std::string_view to_string(ClassLabel c);
std::string_view to_string(Author a);
std::string_view to_string(Verdict v);

ClassLabel parse_class(std::string_view s);
Author parse_author(std::string_view s);

// Human -> Human, Robot -> Robot; Hybrid has no single class.
std::optional<ClassLabel> author_class(Author a);

}  // namespace brushtrace
