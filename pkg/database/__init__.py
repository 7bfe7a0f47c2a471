# Run ledger package
from database.models import DatabaseManager, RunKind, Verdict, VerificationRun, get_db_manager

__all__ = ["DatabaseManager", "RunKind", "Verdict", "VerificationRun", "get_db_manager"]
