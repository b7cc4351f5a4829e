"""Points, class scores, badges, facility points, weekly tasks, and leaderboards.

Quest content lives elsewhere; here a quest is an opaque (id, points)
definition. Facility points credit a school one point per whole percent of
measured consumption reduction against a baseline period.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field


class UnknownQuest(Exception):
    pass


class UnknownClass(Exception):
    pass


class UnknownStudent(Exception):
    pass


class UnknownSchool(Exception):
    pass


class DuplicateCompletion(Exception):
    pass


class DuplicateBadge(Exception):
    pass


@dataclass(frozen=True)
class QuestCompletion:
    student_id: str
    quest_id: str
    points: int
    completed_at: int


@dataclass(frozen=True)
class Badge:
    class_id: str
    kind: str
    awarded_at: int
    criterion: str


@dataclass
class WeeklyTask:
    id: str
    week: str  # ISO week label, e.g. "2017-W06"
    description: str
    hashtag: str
    submissions: list[tuple[str, str, int]] = field(default_factory=list)  # (user, link/text, at)


@dataclass(frozen=True)
class LeaderboardRow:
    entity_id: str
    score: int
    last_scored_at: int | None


@dataclass(frozen=True)
class Snapshot:
    class_id: str
    student_id: str
    title: str
    submitted_at: int


def facility_points_from_delta(delta_pct: float | None) -> int:
    """One point per whole percent of reduction; increases earn nothing."""
    if delta_pct is None:
        return 0
    return int(math.floor(max(0.0, -delta_pct)))


class Engagement:
    """Scoring state behind the community dashboard.

    Mutations are serialized; every read (including the leaderboard) runs
    under the same lock, so a class score always equals the sum of the member
    scores visible alongside it.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._quests: dict[str, int] = {}
        self._students: dict[str, str] = {}  # student -> class
        self._classes: dict[str, str] = {}  # class -> school
        self._completions: dict[str, dict[str, QuestCompletion]] = {}
        self._scores: dict[str, int] = {}
        self._badges: dict[str, dict[str, Badge]] = {}
        self._snapshots: dict[str, list[Snapshot]] = {}
        self._tasks: dict[str, WeeklyTask] = {}  # keyed by week label
        self._facility_points: dict[str, int] = {}  # school -> points
        self._last_scored: dict[str, int] = {}  # class/school -> ts of last completion

    # -- roster -----------------------------------------------------------------

    def register_quest(self, quest_id: str, points: int) -> None:
        if points < 0:
            raise ValueError("quest points must be non-negative")
        with self._lock:
            self._quests[quest_id] = points

    def register_class(self, class_id: str, school_id: str) -> None:
        with self._lock:
            self._classes[class_id] = school_id

    def register_student(self, student_id: str, class_id: str) -> None:
        with self._lock:
            if class_id not in self._classes:
                raise UnknownClass(class_id)
            self._students[student_id] = class_id
            self._scores.setdefault(student_id, 0)

    def load_defs(self, defs: dict) -> None:
        """Bulk-load quests/classes/students/snapshots from a config document."""
        for c in defs.get("classes", []):
            self.register_class(c["id"], c["school"])
        for s in defs.get("students", []):
            self.register_student(s["id"], s["class"])
        for q in defs.get("quests", []):
            self.register_quest(q["id"], int(q["points"]))
        for snap in defs.get("snapshots", []):
            self.add_snapshot(snap["class"], snap["student"], snap["title"], int(snap.get("at", 0)))

    # -- scoring ---------------------------------------------------------------------

    def award_points(self, student_id: str, quest_id: str, at_ts: int) -> int:
        """Record a quest completion; returns the student's new score."""
        with self._lock:
            if quest_id not in self._quests:
                raise UnknownQuest(quest_id)
            if student_id not in self._students:
                raise UnknownStudent(student_id)
            done = self._completions.setdefault(student_id, {})
            if quest_id in done:
                raise DuplicateCompletion(f"{student_id} already completed {quest_id}")
            points = self._quests[quest_id]
            done[quest_id] = QuestCompletion(student_id, quest_id, points, at_ts)
            self._scores[student_id] = self._scores.get(student_id, 0) + points
            class_id = self._students[student_id]
            self._last_scored[class_id] = at_ts
            school_id = self._classes.get(class_id)
            if school_id:
                self._last_scored[school_id] = at_ts
            return self._scores[student_id]

    def student_score(self, student_id: str) -> int:
        with self._lock:
            if student_id not in self._students:
                raise UnknownStudent(student_id)
            return self._scores.get(student_id, 0)

    def class_score(self, class_id: str) -> int:
        """Sum of the member students' scores."""
        with self._lock:
            if class_id not in self._classes:
                raise UnknownClass(class_id)
            return self._class_score_locked(class_id)

    def _class_score_locked(self, class_id: str) -> int:
        return sum(
            self._scores.get(s, 0) for s, c in self._students.items() if c == class_id
        )

    def school_score(self, school_id: str) -> int:
        """Sum of the school's class scores plus its facility points."""
        with self._lock:
            if school_id not in self._classes.values():
                raise UnknownSchool(school_id)
            return self._school_score_locked(school_id)

    def _school_score_locked(self, school_id: str) -> int:
        classes = [c for c, s in self._classes.items() if s == school_id]
        return sum(self._class_score_locked(c) for c in classes) + self._facility_points.get(
            school_id, 0
        )

    def set_facility_points(self, school_id: str, points: int) -> None:
        with self._lock:
            self._facility_points[school_id] = max(0, int(points))

    def facility_points(self, school_id: str) -> int:
        with self._lock:
            return self._facility_points.get(school_id, 0)

    # -- badges / snapshots / weekly tasks ----------------------------------------------

    def award_badge(self, class_id: str, kind: str, criterion: str, at_ts: int) -> Badge:
        with self._lock:
            if class_id not in self._classes:
                raise UnknownClass(class_id)
            per_class = self._badges.setdefault(class_id, {})
            if kind in per_class:
                raise DuplicateBadge(f"class {class_id} already holds {kind}")
            badge = Badge(class_id, kind, at_ts, criterion)
            per_class[kind] = badge
            return badge

    def badges(self, class_id: str) -> list[Badge]:
        with self._lock:
            return sorted(self._badges.get(class_id, {}).values(), key=lambda b: b.awarded_at)

    def add_snapshot(self, class_id: str, student_id: str, title: str, at_ts: int) -> None:
        with self._lock:
            if class_id not in self._classes:
                raise UnknownClass(class_id)
            self._snapshots.setdefault(class_id, []).append(
                Snapshot(class_id, student_id, title, at_ts)
            )

    def recent_snapshots(self, class_id: str, limit: int = 10) -> list[Snapshot]:
        with self._lock:
            snaps = sorted(self._snapshots.get(class_id, []), key=lambda s: s.submitted_at)
            return snaps[-limit:]

    def set_weekly_task(self, task: WeeklyTask) -> None:
        """One active task per week; setting the same week replaces it."""
        with self._lock:
            self._tasks[task.week] = task

    def weekly_task(self, week: str) -> WeeklyTask | None:
        with self._lock:
            return self._tasks.get(week)

    def submit_weekly(self, week: str, user_id: str, content: str, at_ts: int) -> None:
        with self._lock:
            task = self._tasks.get(week)
            if task is None:
                raise KeyError(f"no task for week {week}")
            task.submissions.append((user_id, content, at_ts))

    # -- leaderboard -------------------------------------------------------------------

    def class_members(self, class_id: str) -> dict[str, int]:
        with self._lock:
            if class_id not in self._classes:
                raise UnknownClass(class_id)
            return {
                s: self._scores.get(s, 0) for s, c in self._students.items() if c == class_id
            }

    def leaderboard(self, scope: str = "classes") -> list[LeaderboardRow]:
        """Descending by score; ties go to the entity that reached its score
        first (earliest last-scoring timestamp), then lexicographic id."""
        with self._lock:
            if scope == "classes":
                rows = [
                    LeaderboardRow(c, self._class_score_locked(c), self._last_scored.get(c))
                    for c in self._classes
                ]
            elif scope == "schools":
                schools = sorted(set(self._classes.values()))
                rows = [
                    LeaderboardRow(s, self._school_score_locked(s), self._last_scored.get(s))
                    for s in schools
                ]
            else:
                raise ValueError(f"scope must be 'classes' or 'schools', got {scope!r}")
        return sorted(
            rows,
            key=lambda r: (
                -r.score,
                r.last_scored_at if r.last_scored_at is not None else float("-inf"),
                r.entity_id,
            ),
        )
