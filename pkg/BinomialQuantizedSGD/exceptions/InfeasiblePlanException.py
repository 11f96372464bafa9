class InfeasiblePlanException(Exception):
    """
    Exception raised when a bit budget cannot meet the privacy requirement.
    """

    def __init__(self, message, status=3):

        super().__init__(message)

        self.status = status
