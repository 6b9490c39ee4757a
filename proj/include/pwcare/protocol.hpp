#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pwcare/clock.hpp"
#include "pwcare/geo.hpp"

namespace pwcare::protocol {

inline constexpr std::size_t kMaxPayloadBytes = 160;

enum class Language { En, Ku, Ar };

std::string_view to_string(Language lang) noexcept;
std::optional<Language> language_from(std::string_view text) noexcept;

enum class MessageKind { Reg, Help, Chg };

std::string_view to_string(MessageKind kind) noexcept;

// REG|<name>|<phone>|<lat>|<lon>|<lmp YYYY-MM-DD>|<lang>
struct RegPayload {
  std::string name;
  std::string phone;
  geo::GeoPoint home;
  Date lmp;
  Language language = Language::En;

  friend bool operator==(const RegPayload&, const RegPayload&) = default;
};

// HELP|<patient_id>|<lat>|<lon>|<client_ts ISO-8601>
struct HelpPayload {
  std::string patient_id;
  geo::GeoPoint location;
  Timestamp client_ts;

  friend bool operator==(const HelpPayload&, const HelpPayload&) = default;
};

// CHG|<patient_id>|<preferred_date YYYY-MM-DD>
struct ChgPayload {
  std::string patient_id;
  Date preferred_date;

  friend bool operator==(const ChgPayload&, const ChgPayload&) = default;
};

using Payload = std::variant<RegPayload, HelpPayload, ChgPayload>;

struct InboundMessage {
  std::string sender_phone;
  std::vector<std::string> fields;  // raw payload fields after the kind token
  Payload body;
  Timestamp received_at;

  MessageKind kind() const noexcept { return static_cast<MessageKind>(body.index()); }
};

// Throws pwcare::Error: OversizedPayload, InvalidEncoding, UnknownKind,
// FieldCountMismatch, MalformedCoordinate, OutOfRange, InvalidField.
InboundMessage parse_inbound(std::string_view raw, std::string_view sender_phone, Timestamp now);

// Canonical wire text. Throws OversizedPayload rather than truncating,
// InvalidField for values the grammar cannot carry (e.g. '|' in a name).
std::string serialize_inbound(const Payload& body);

bool is_valid_phone(std::string_view phone) noexcept;
bool is_valid_utf8(std::string_view text) noexcept;

// Shortest decimal text that parses back to the same double.
std::string format_degrees(double value);

struct OutboundNotification {
  std::string recipient_phone;
  std::string template_id;
  Language language = Language::En;
  std::string rendered;

  friend bool operator==(const OutboundNotification&, const OutboundNotification&) = default;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

// Immutable after construction; safe to share across threads.
class TemplateCatalog {
 public:
  // Catalog with the shipped templates (config/templates.tsv).
  static TemplateCatalog defaults();
  // Parses `<template_id>\t<lang>\t<text>` lines; '#' starts a comment line.
  // Entries override any defaults with the same key.
  static TemplateCatalog from_tsv(std::string_view text, bool include_defaults = true);
  static TemplateCatalog from_file(const std::string& path, bool include_defaults = true);

  bool contains(std::string_view template_id, Language lang) const;
  std::size_t size() const noexcept { return templates_.size(); }

  // Throws MissingTemplate, UnboundPlaceholder.
  OutboundNotification render(std::string_view recipient_phone, std::string_view template_id,
                              Language lang, const Bindings& bindings) const;

 private:
  std::map<std::pair<std::string, Language>, std::string> templates_;
};

}  // namespace pwcare::protocol
