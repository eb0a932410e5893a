"""Benchmark suite fixtures: query sets, expected steps, expected outputs.

Four query categories mirroring the classic agent benchmarks at desk scale:
one app (combined typewriter), many apps (per-letter typewriters, up to 13
per query), collaborating apps (the relational family, up to 5 per query),
and no apps (email field extraction with apps disabled).

Case fields follow the familiar fixture shape: question, reference,
order_matters, expected_steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class BenchCase:
    question: str
    reference: str
    expected_steps: list[str] = field(default_factory=list)
    order_matters: bool = True


def _typed(word: str) -> list[str]:
    return ["type_letter"] * len(word)


def _typed_26(word: str) -> list[str]:
    return [f"type_letter_{c}" for c in word]


SINGLE_APP_REGISTRY = ["typewriter"]
SINGLE_APP_CASES = [
    BenchCase(f"type '{w}'", w, _typed(w)) for w in
    ("abc", "cat", "hello", "secure", "queue", "book")
]

MULTIPLE_APPS_REGISTRY = [f"letter_{c}" for c in "abcdefghijklmnopqrstuvwxyz"]
# repeated letters stay contiguous: sequential per-app invocation cannot
# interleave revisits
MULTIPLE_APPS_CASES = [
    BenchCase(f"type '{w}'", w, _typed_26(w)) for w in
    ("cat", "book", "moon", "free", "wood", "lumberjack", "troublemaking")
]

MULTI_APP_COLLAB_REGISTRY = [
    "relational_data", "user_locator", "color_prefs", "food_prefs", "music_prefs",
]
MULTI_APP_COLLAB_CASES = [
    BenchCase("what is alice's email address?", "alice@gmail.com",
              ["find_users_by_name", "get_user_email"]),
    BenchCase("what is bob's phone number?", "555-0199",
              ["find_users_by_name", "get_user_phone"]),
    BenchCase("where does carol live?", "Lakewood",
              ["find_users_by_name", "get_user_location"]),
    BenchCase("what is bob's favorite color?", "green",
              ["find_users_by_name", "get_user_favorite_color"]),
    BenchCase("what foods does alice like?", "sushi",
              ["find_users_by_name", "get_food_likes"]),
    BenchCase(
        "prepare a dinner brief for bob: where he lives, his favorite color, "
        "what foods he likes, a song to play, and his email address for the invite",
        "bob@gmail.com",
        ["find_users_by_name", "get_user_location", "get_user_favorite_color",
         "get_food_likes", "get_favorite_song", "get_user_email"]),
]

NO_APPS_REGISTRY: list[str] = []


def _extraction_case(sender: str, date: str, amount: str, filler: str) -> BenchCase:
    question = (
        "Extract the sender, date, and amount from this email: "
        f"From: {sender}\nDate: {date}\nTotal: {amount}\n{filler}"
    )
    reference = f"Sender: {sender}. Date: {date}. Amount: {amount}."
    return BenchCase(question, reference, [])


NO_APPS_CASES = [
    _extraction_case("billing@acme.example", "2025-03-14", "$42.50",
                     "Thanks for your purchase."),
    _extraction_case("orders@shoply.example", "2025-01-02", "$8.99",
                     "Your order has shipped."),
    _extraction_case("invoices@utility.example", "2024-12-28", "$130.00",
                     "Service period December."),
    _extraction_case("receipts@cafe.example", "2025-07-04", "$6.25",
                     "Enjoy your coffee!"),
]

SUITES = {
    "single_app": (SINGLE_APP_REGISTRY, SINGLE_APP_CASES),
    "multiple_apps": (MULTIPLE_APPS_REGISTRY, MULTIPLE_APPS_CASES),
    "multi_app_collab": (MULTI_APP_COLLAB_REGISTRY, MULTI_APP_COLLAB_CASES),
    "no_apps": (NO_APPS_REGISTRY, NO_APPS_CASES),
}
