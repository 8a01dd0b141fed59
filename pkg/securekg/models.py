from django.db import models


class ProtocolRun(models.Model):
    COMMAND_CHOICES = (
        ('merge', 'Merge'),
        ('query', 'Query'),
        ('embed', 'Embed'),
        ('complete', 'Complete'),
        ('demo_loop', 'Guarantee loop demo'),
        ('selftest', 'Self test'),
    )

    STATUS_CHOICES = (
        ('ok', 'OK'),
        ('error', 'Error'),
        ('failed', 'Acceptance failed'),
    )

    command = models.CharField(max_length=20, choices=COMMAND_CHOICES)
    seed = models.BigIntegerField(default=0)
    parties = models.PositiveSmallIntegerField(default=2)
    rounds = models.PositiveIntegerField(default=0)
    party_messages = models.PositiveIntegerField(default=0)
    dealer_messages = models.PositiveIntegerField(default=0)
    bytes_sent = models.BigIntegerField(default=0)
    transcript_digest = models.CharField(max_length=64, blank=True)
    status = models.CharField(max_length=10, choices=STATUS_CHOICES, default='ok')
    summary = models.JSONField(default=dict, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        db_table = 'protocol_runs'
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.command} seed={self.seed} ({self.status})"

    @classmethod
    def record(cls, command, runtime=None, status='ok', summary=None, seed=0, parties=2):
        """Store one run; traffic figures come from the runtime's transcript."""
        traffic = runtime.transcript.summary() if runtime is not None else {}
        return cls.objects.create(
            command=command,
            seed=runtime.seed if runtime is not None else seed,
            parties=runtime.parties if runtime is not None else parties,
            rounds=traffic.get('rounds', 0),
            party_messages=traffic.get('party_messages', 0),
            dealer_messages=traffic.get('dealer_messages', 0),
            bytes_sent=traffic.get('bytes', 0),
            transcript_digest=traffic.get('digest', ''),
            status=status,
            summary=summary or {},
        )
