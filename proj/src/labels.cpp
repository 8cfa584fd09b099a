#include "brushtrace/labels.h"

#include <string>

#include "brushtrace/errors.h"

namespace brushtrace {

ClassLabel class_from_index(int i) {
    if (i < 0 || i >= kNumClasses) throw UsageError("class index out of range: " + std::to_string(i));
    return static_cast<ClassLabel>(i);
}

std::string_view to_string(ClassLabel c) {
    switch (c) {
        case ClassLabel::Blank: return "blank";
        case ClassLabel::Human: return "human";
        case ClassLabel::Robot: return "robot";
    }
    return "?";
}

std::string_view to_string(Author a) {
    switch (a) {
        case Author::Human: return "human";
        case Author::Robot: return "robot";
        case Author::Hybrid: return "hybrid";
    }
    return "?";
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Human: return "human";
        case Verdict::Robot: return "robot";
        case Verdict::Indeterminate: return "indeterminate";
    }
    return "?";
}

ClassLabel parse_class(std::string_view s) {
    if (s == "blank") return ClassLabel::Blank;
    if (s == "human") return ClassLabel::Human;
    if (s == "robot") return ClassLabel::Robot;
    throw UsageError("unknown class label '" + std::string(s) + "'");
}

Author parse_author(std::string_view s) {
    if (s == "human") return Author::Human;
    if (s == "robot") return Author::Robot;
    if (s == "hybrid") return Author::Hybrid;
    throw UsageError("unknown author '" + std::string(s) + "' (expected human|robot|hybrid)");
}

std::optional<ClassLabel> author_class(Author a) {
    switch (a) {
        case Author::Human: return ClassLabel::Human;
        case Author::Robot: return ClassLabel::Robot;
        case Author::Hybrid: return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace brushtrace
