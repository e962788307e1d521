"""Exceptions raised by storage_dr."""


class StorageDrError(Exception):
    '''Base class of every error raised by the package.'''


class ConfigurationError(StorageDrError, ValueError):
    '''Invalid parameters, scenario files or environment settings.'''


class ScenarioError(ConfigurationError):
    '''
    A scenario file could not be parsed or violates an invariant.

    Args:
        message(str): what went wrong
        field(str): dotted path of the offending field, if known
        line(int): line number in the source file, if known
    '''

    def __init__(self, message, field=None, line=None):
        location = []
        if field is not None:
            location.append(f'field {field}')
        if line is not None:
            location.append(f'line {line}')
        if location:
            message = f'{message} ({", ".join(location)})'
        super().__init__(message)
        self.field = field
        self.line = line


class StructuralInfeasibilityError(ConfigurationError):
    '''The residual load cannot be served at all with the given grid limit.'''


class UnknownStateError(StorageDrError, KeyError):
    '''A system-state label has no disutility entry.'''

    def __str__(self):
        return str(self.args[0]) if self.args else ''


class EnergyAvailabilityError(StorageDrError):
    '''An action discharges more than the stored energy allows.'''


class InfeasibleActionError(StorageDrError):
    '''
    A policy produced an action that violates the feasibility constraints.

    Args:
        slot(int): slot index at which the action was emitted
        violations(list): FeasibilityViolation records
    '''

    def __init__(self, slot, violations):
        names = ', '.join(v.constraint for v in violations)
        super().__init__(f'infeasible action at slot {slot}: {names}')
        self.slot = slot
        self.violations = list(violations)


class TheoremViolationError(StorageDrError):
    '''
    A sample-path guarantee or the per-slot drift inequality failed.

    Args:
        slot(int): first offending slot, None for whole-run checks
        constraint(str): name of the violated check
        detail(str): human readable description
    '''

    def __init__(self, slot, constraint, detail=''):
        where = f'slot {slot}' if slot is not None else 'run'
        super().__init__(f'{constraint} violated at {where}: {detail}'.rstrip(': '))
        self.slot = slot
        self.constraint = constraint
        self.detail = detail


class ResourceBudgetError(StorageDrError):
    '''A grid or state space is larger than the configured budget.'''


class ConvergenceError(StorageDrError):
    '''An iterative method did not reach its tolerance.'''


class MismatchedRunsError(StorageDrError, ValueError):
    '''Runs compared against each other do not share scenario and seed.'''
